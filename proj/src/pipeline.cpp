#include "autods/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "autods/report.hpp"
#include "autods/rng.hpp"

namespace autods::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ------------------------------------------------------------------ config

/// Reads one JSON object and rejects keys nobody asked for.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(ErrorKind::config, where() + " must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            fail(ErrorKind::config, "config key '" + at(key) + "' has the wrong type");
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    Reader child(const char* key) {
        seen_.insert(key);
        return Reader(j_.contains(key) ? j_.at(key) : empty(), at(key));
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string at(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) fail(ErrorKind::config, "unknown config key '" + (path_.empty() ? k : path_ + "." + k) + "'");
    }

private:
    static const json& empty() {
        static const json e = json::object();
        return e;
    }
    std::string where() const { return path_.empty() ? "config" : "config key '" + path_ + "'"; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

}  // namespace

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
    PipelineConfig c;
    Reader r(j, "");
    std::string input, output = c.output_dir.string(), task = "auto";
    r.get("name", c.name);
    r.get("input", input);
    r.get("target", c.target);
    r.get("task", task);
    r.get("seed", c.seed);
    r.get("max_cycles", c.max_cycles);
    r.get("output_dir", output);
    r.get("threads", c.threads);
    r.get("holdout_fraction", c.holdout_fraction);
    r.get("stratify", c.stratify);
    if (input.empty()) fail(ErrorKind::config, "config key 'input' is required");
    if (c.target.empty()) fail(ErrorKind::config, "config key 'target' is required");
    c.input = fs::path(input).is_absolute() ? fs::path(input) : base_dir / input;
    c.output_dir = fs::path(output).is_absolute() ? fs::path(output) : base_dir / output;
    if (task != "auto") c.task = model::parse_task(task);
    if (c.max_cycles < 1 || c.max_cycles > 2) fail(ErrorKind::config, "max_cycles must be 1 or 2");
    if (c.threads < 1) fail(ErrorKind::config, "threads must be at least 1");
    if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0)) fail(ErrorKind::config, "holdout_fraction must lie in (0, 1)");

    {
        Reader s = r.child("stages");
        s.get("hypothesis", c.hypothesis);
        s.get("feature_engineering", c.feature_engineering);
        s.finish();
    }
    {
        Reader p = r.child("proposer");
        auto& pc = c.proposer;
        p.get("kind", pc.kind);
        p.get("max_hypotheses", pc.max_hypotheses);
        p.get("endpoint", pc.endpoint);
        p.get("model", pc.model);
        p.get("max_llm_calls", pc.max_llm_calls);
        p.get("max_tokens", pc.max_tokens);
        p.get("timeout_seconds", pc.timeout_seconds);
        p.get("fallback_to_templates", pc.fallback_to_templates);
        Reader prices = p.child("prices");
        if (p.has("prices")) {
            for (const auto& [model, _] : p.raw("prices").items()) {
                Reader one = prices.child(model.c_str());
                proposer::Price price;
                one.get("input_per_1k", price.input_per_1k);
                one.get("output_per_1k", price.output_per_1k);
                one.finish();
                pc.prices[model] = price;
            }
        }
        p.finish();
        if (pc.kind != "templates" && pc.kind != "llm") fail(ErrorKind::config, "proposer.kind must be templates or llm");
        if (pc.kind == "llm") {
            if (pc.endpoint.empty() || pc.model.empty()) fail(ErrorKind::config, "proposer.endpoint and proposer.model are required for llm");
            if (!pc.prices.count(pc.model)) fail(ErrorKind::config, "proposer.prices has no entry for model '" + pc.model + "'");
        }
        if (pc.max_hypotheses == 0) fail(ErrorKind::config, "proposer.max_hypotheses must be positive");
    }
    {
        Reader h = r.child("hypothesis");
        std::string fdr = to_string(c.fdr);
        h.get("fdr", fdr);
        h.finish();
        c.fdr = hypothesis::parse_fdr(fdr);
    }
    {
        Reader k = r.child("cleaning");
        auto& cc = c.cleaning;
        std::string method = cleaning::to_string(cc.outlier_method), action = cleaning::to_string(cc.outlier_action);
        k.get("median_below", cc.median_below);
        k.get("mice_up_to", cc.mice_up_to);
        k.get("categorical_missing_above", cc.categorical_missing_above);
        k.get("outliers", cc.outliers);
        k.get("outlier_method", method);
        k.get("outlier_action", action);
        k.get("z_threshold", cc.z_threshold);
        k.get("iqr_k", cc.iqr_k);
        k.get("mice_iterations", cc.mice_iterations);
        k.get("forest_trees", cc.forest_trees);
        k.get("exclude", cc.exclude);
        k.finish();
        cc.outlier_method = cleaning::parse_outlier_method(method);
        cc.outlier_action = cleaning::parse_outlier_action(action);
    }
    {
        Reader p = r.child("preprocess");
        p.get("one_hot_max_levels", c.preprocess.one_hot_max_levels);
        p.get("skew_threshold", c.preprocess.skew_threshold);
        p.get("bin_uninvolved", c.preprocess.bin_uninvolved);
        p.finish();
    }
    {
        Reader f = r.child("features");
        f.get("budget", c.feature_budget);
        f.get("max_keep", c.max_features);
        f.get("default_products", c.default_products);
        f.finish();
        if (c.feature_budget == 0) fail(ErrorKind::config, "features.budget must be positive");
    }
    {
        Reader m = r.child("model");
        auto& mo = c.model;
        std::vector<std::string> algorithms;
        std::string ensemble = model::to_string(mo.ensemble);
        m.get("algorithms", algorithms);
        m.get("folds", mo.folds);
        m.get("search_budget", mo.search_budget);
        m.get("ensemble", ensemble);
        m.get("ensemble_size", mo.ensemble_size);
        m.get("exclude", mo.exclude);
        m.finish();
        for (const auto& a : algorithms) mo.algorithms.push_back(model::parse_algorithm(a));
        mo.ensemble = model::parse_ensemble_policy(ensemble);
        if (mo.folds < 2) fail(ErrorKind::config, "model.folds must be at least 2");
        if (mo.search_budget == 0) fail(ErrorKind::config, "model.search_budget must be positive");
    }
    {
        Reader l = r.child("ledger");
        l.get("wall_clock", c.wall_clock);
        l.finish();
    }
    r.finish();
    if (c.proposer.kind == "llm") {
        proposer::ProposalBudget b;
        b.max_hypotheses = c.proposer.max_hypotheses;
        b.max_llm_calls = c.proposer.max_llm_calls;
        b.max_tokens = c.proposer.max_tokens;
        b.prices = c.proposer.prices;
        b.validate();
    }
    c.cleaning.target = c.target;
    c.cleaning.seed = derive_seed(c.seed, "cleaning");
    c.cleaning.threads = c.threads;
    c.preprocess.seed = derive_seed(c.seed, "preprocess");
    c.model.target = c.target;
    c.model.task = c.task;
    c.model.seed = derive_seed(c.seed, "model");
    c.model.threads = c.threads;
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, "cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        fail(ErrorKind::config, "config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

json to_json(const PipelineConfig& c) {
    json prices = json::object();
    for (const auto& [m, p] : c.proposer.prices) prices[m] = {{"input_per_1k", p.input_per_1k}, {"output_per_1k", p.output_per_1k}};
    std::vector<std::string> algorithms;
    for (auto a : c.model.algorithms) algorithms.push_back(model::to_string(a));
    return {{"name", c.name},
            {"input", c.input.string()},
            {"target", c.target},
            {"task", c.task ? model::to_string(*c.task) : "auto"},
            {"seed", c.seed},
            {"max_cycles", c.max_cycles},
            {"output_dir", c.output_dir.string()},
            {"threads", c.threads},
            {"holdout_fraction", c.holdout_fraction},
            {"stratify", c.stratify},
            {"stages", {{"hypothesis", c.hypothesis}, {"feature_engineering", c.feature_engineering}}},
            {"proposer",
             {{"kind", c.proposer.kind},
              {"max_hypotheses", c.proposer.max_hypotheses},
              {"endpoint", c.proposer.endpoint},
              {"model", c.proposer.model},
              {"prices", prices},
              {"max_llm_calls", c.proposer.max_llm_calls},
              {"max_tokens", c.proposer.max_tokens},
              {"timeout_seconds", c.proposer.timeout_seconds},
              {"fallback_to_templates", c.proposer.fallback_to_templates}}},
            {"hypothesis", {{"fdr", to_string(c.fdr)}}},
            {"cleaning",
             {{"median_below", c.cleaning.median_below},
              {"mice_up_to", c.cleaning.mice_up_to},
              {"categorical_missing_above", c.cleaning.categorical_missing_above},
              {"outliers", c.cleaning.outliers},
              {"outlier_method", cleaning::to_string(c.cleaning.outlier_method)},
              {"outlier_action", cleaning::to_string(c.cleaning.outlier_action)},
              {"z_threshold", c.cleaning.z_threshold},
              {"iqr_k", c.cleaning.iqr_k},
              {"mice_iterations", c.cleaning.mice_iterations},
              {"forest_trees", c.cleaning.forest_trees},
              {"exclude", c.cleaning.exclude}}},
            {"preprocess",
             {{"one_hot_max_levels", c.preprocess.one_hot_max_levels},
              {"skew_threshold", c.preprocess.skew_threshold},
              {"bin_uninvolved", c.preprocess.bin_uninvolved}}},
            {"features", {{"budget", c.feature_budget}, {"max_keep", c.max_features}, {"default_products", c.default_products}}},
            {"model",
             {{"algorithms", algorithms},
              {"folds", c.model.folds},
              {"search_budget", c.model.search_budget},
              {"ensemble", model::to_string(c.model.ensemble)},
              {"ensemble_size", c.model.ensemble_size},
              {"exclude", c.model.exclude}}},
            {"ledger", {{"wall_clock", c.wall_clock}}}};
}

void validate_against_data(const PipelineConfig& c, const DataTable& data) {
    const Column* t = data.find(c.target);
    if (!t) fail(ErrorKind::config, "target '" + c.target + "' is not a column of " + c.input.string());
    if (t->missing_count() == t->size()) fail(ErrorKind::data, "target '" + c.target + "' has no values");
    if (c.task == model::Task::regression && t->kind() != ColumnKind::numeric)
        fail(ErrorKind::config, "regression target '" + c.target + "' must be numeric");
    if (t->kind() == ColumnKind::datetime) fail(ErrorKind::config, "target '" + c.target + "' is a datetime column");
    for (const auto& name : c.model.exclude)
        if (!data.has_column(name)) fail(ErrorKind::config, "model.exclude names unknown column '" + name + "'");
}

Split split_rows(const DataTable& table, const std::string& target, bool stratify, double fraction, std::uint64_t seed) {
    const Column& t = table.column(target);
    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < table.n_rows(); ++i) {
        std::string key;
        if (stratify) key = t.kind() == ColumnKind::categorical ? t.text(i) : fmt("%.17g", t.number(i));
        strata[key].push_back(i);
    }
    Rng rng(derive_seed(seed, "split"));
    std::vector<std::uint8_t> in_holdout(table.n_rows(), 0);
    for (auto& [_, rows] : strata) {
        rng.shuffle(rows);
        const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
        for (std::size_t i = 0; i < k && i < rows.size(); ++i) in_holdout[rows[i]] = 1;
    }
    Split s;
    for (std::size_t i = 0; i < table.n_rows(); ++i) (in_holdout[i] ? s.holdout : s.train).push_back(i);
    if (s.train.empty() || s.holdout.empty()) fail(ErrorKind::data, "too few rows to split into train and holdout");
    return s;
}

namespace {

class ClockGuard {
public:
    explicit ClockGuard(bool wall_clock) {
        if (!wall_clock) set_fixed_timestamp("1970-01-01T00:00:00Z");
    }
    ~ClockGuard() { set_fixed_timestamp(std::nullopt); }
};

struct Context {
    const PipelineConfig& config;
    RunResult& result;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    /// Runs one stage, timing it and converting its errors into StageFailure.
    template <class F>
    void stage(const std::string& name, F&& body) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body();
        } catch (const StageFailure&) {
            throw;
        } catch (const Error& e) {
            LedgerEntry f = make_entry("pipeline", "failed", {});
            f.params["stage"] = name;
            f.results["error_kind"] = std::string(to_string(e.kind()));
            f.results["message"] = std::string(e.what());
            result.ledger.append(std::move(f));
            throw StageFailure(e.kind(), name, e.what(), result.ledger);
        } catch (const std::exception& e) {
            LedgerEntry f = make_entry("pipeline", "failed", {});
            f.params["stage"] = name;
            f.results["error_kind"] = std::string("stage");
            f.results["message"] = std::string(e.what());
            result.ledger.append(std::move(f));
            throw StageFailure(ErrorKind::stage, name, e.what(), result.ledger);
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.timings.push_back({name, secs});
        if (config.wall_clock) {
            LedgerEntry e = make_entry("pipeline", "timing", {});
            e.params["stage"] = name;
            e.results["seconds"] = secs;
            result.ledger.append(std::move(e));
        }
    }

    void skip(const std::string& stage, const std::string& reason) {
        LedgerEntry e = make_entry(stage, "skipped", {});
        e.params["reason"] = reason;
        result.ledger.append(std::move(e));
    }
};

struct Prepared {
    DataTable cleaned, train, holdout;
    model::Task task = model::Task::classification;
};

Prepared prepare(const PipelineConfig& c, Context& ctx) {
    Prepared p;
    DataTable raw;
    ctx.stage("load", [&] {
        try {
            raw = load_csv(c.input);
        } catch (const Error& e) {
            fail(e.kind() == ErrorKind::config ? ErrorKind::data : e.kind(), e.what());
        }
        validate_against_data(c, raw);
        const Column& t = raw.column(c.target);
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < raw.n_rows(); ++i)
            if (!t.is_missing(i)) keep.push_back(i);
        LedgerEntry e = make_entry("load", "read_csv", {});
        e.params["path"] = c.input.filename().string();
        e.results["rows"] = static_cast<std::int64_t>(raw.n_rows());
        e.results["columns"] = static_cast<std::int64_t>(raw.n_cols());
        e.results["rows_missing_target"] = static_cast<std::int64_t>(raw.n_rows() - keep.size());
        ctx.result.ledger.append(std::move(e));
        if (keep.size() != raw.n_rows()) raw = raw.take_rows(keep);
        p.task = c.task ? *c.task : model::infer_task(raw.column(c.target));
    });
    ctx.stage("cleaning", [&] { p.cleaned = cleaning::clean(raw, c.cleaning, &ctx.result.ledger).table; });
    ctx.stage("split", [&] {
        const bool stratified = c.stratify && p.task == model::Task::classification;
        const Split s = split_rows(p.cleaned, c.target, stratified, c.holdout_fraction, c.seed);
        p.train = p.cleaned.take_rows(s.train);
        p.holdout = p.cleaned.take_rows(s.holdout);
        LedgerEntry e = make_entry("split", "holdout", {c.target});
        e.params["fraction"] = c.holdout_fraction;
        e.params["stratified"] = stratified;
        e.results["train_rows"] = static_cast<std::int64_t>(s.train.size());
        e.results["holdout_rows"] = static_cast<std::int64_t>(s.holdout.size());
        ctx.result.ledger.append(std::move(e));
    });
    return p;
}

/// Docs from the configured proposer; LLM transport failures fall back to templates.
proposer::Proposal propose(const PipelineConfig& c, const DataTable& train, MetadataLedger& ledger, std::vector<std::string>& warnings) {
    const auto summaries = summarize(train);
    proposer::Proposal prop;
    std::string used = "templates";
    if (c.proposer.kind == "llm") {
        proposer::ProposalBudget b;
        b.max_hypotheses = c.proposer.max_hypotheses;
        b.max_llm_calls = c.proposer.max_llm_calls;
        b.max_tokens = c.proposer.max_tokens;
        b.prices = c.proposer.prices;
        proposer::LlmEndpoint ep;
        ep.url = c.proposer.endpoint;
        ep.model = c.proposer.model;
        if (const char* key = std::getenv("LLM_API_KEY")) ep.api_key = key;
        ep.timeout_seconds = c.proposer.timeout_seconds;
        try {
            prop = proposer::llm_propose(summaries, c.target, b, ep,
                                         [&](const hypothesis::HypothesisDoc& d) { return hypothesis::check_schema(d, train); });
            used = "llm";
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::transport || !c.proposer.fallback_to_templates) throw;
            warnings.push_back(std::string("LLM proposer unavailable, used templates: ") + e.what());
            LedgerEntry f = make_entry("hypothesis", "proposer_fallback", {});
            f.results["reason"] = std::string(e.what());
            ledger.append(std::move(f));
        }
    }
    if (used == "templates") prop.docs = proposer::enumerate_templates(summaries, c.target, c.proposer.max_hypotheses);
    for (const auto& w : prop.warnings) warnings.push_back(w);
    LedgerEntry e = make_entry("hypothesis", "propose", {});
    e.params["proposer"] = used;
    e.results["docs"] = static_cast<std::int64_t>(prop.docs.size());
    e.results["llm_calls"] = static_cast<std::int64_t>(prop.exchanges.size());
    e.results["tokens"] = static_cast<std::int64_t>(prop.total_tokens);
    e.results["cost"] = prop.total_cost;
    e.results["budget_exhausted"] = prop.budget_exhausted;
    ledger.append(std::move(e));
    return prop;
}

/// The indicator columns accepted verdicts added to train, recomputed on holdout.
DataTable add_indicators(const DataTable& holdout, const std::vector<hypothesis::HypothesisDoc>& docs,
                         const std::vector<hypothesis::HypothesisVerdict>& verdicts) {
    std::vector<Column> cols;
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        const auto& v = verdicts[i];
        if (!v.indicator_column || !docs[i].indicator) continue;
        const hypothesis::Mask m = hypothesis::eval_condition(*docs[i].indicator, holdout);
        std::vector<bool> values(m.size());
        for (std::size_t r = 0; r < m.size(); ++r) values[r] = m.is_true(r);
        cols.push_back(Column::boolean(*v.indicator_column, values, m.missing));
    }
    return cols.empty() ? holdout : holdout.with_columns(std::move(cols));
}

void test_batch(const PipelineConfig& c, const std::vector<hypothesis::HypothesisDoc>& docs, DataTable& train, DataTable& holdout,
                RunResult& r) {
    const auto batch = hypothesis::run_batch(train, docs, {.fdr = c.fdr, .seed = derive_seed(c.seed, "hypothesis"), .threads = c.threads},
                                             &r.ledger);
    train = batch.table;
    holdout = add_indicators(holdout, docs, batch.verdicts);
    r.docs.insert(r.docs.end(), docs.begin(), docs.end());
    r.verdicts.insert(r.verdicts.end(), batch.verdicts.begin(), batch.verdicts.end());
}

}  // namespace

RunResult run(const PipelineConfig& c) {
    ClockGuard clock(c.wall_clock);
    RunResult r;
    Context ctx{c, r};
    Prepared p = prepare(c, ctx);
    DataTable train = p.train, holdout = p.holdout;
    std::vector<std::string> base_numeric;
    for (const auto& col : p.cleaned.columns())
        if (col.name() != c.target && col.is_numeric_like() && col.kind() != ColumnKind::datetime) base_numeric.push_back(col.name());

    if (c.hypothesis) {
        ctx.stage("hypothesis", [&] {
            proposer::Proposal prop = propose(c, train, r.ledger, r.warnings);
            r.exchanges = prop.exchanges;
            r.total_cost = prop.total_cost;
            r.budget_exhausted = prop.budget_exhausted;
            if (prop.budget_exhausted) r.warnings.push_back("LLM budget exhausted; continued with the hypotheses accepted so far");
            test_batch(c, prop.docs, train, holdout, r);
        });
    } else {
        ctx.skip("hypothesis", "disabled by stages.hypothesis");
    }

    std::vector<preprocess::TransformSpec> transforms;
    ctx.stage("preprocess", [&] {
        auto plan = preprocess::hypothesis_aware_plan(train, r.verdicts, c.target, c.preprocess);
        auto fitted = preprocess::fit_plan(train, std::move(plan), c.target, &r.ledger);
        train = std::move(fitted.table);
        transforms = std::move(fitted.specs);
        holdout = preprocess::apply_plan(holdout, transforms);
    });

    if (c.feature_engineering) {
        ctx.stage("features", [&] {
            features::CandidateOptions fo;
            fo.target = c.target;
            fo.columns = base_numeric;
            fo.budget = c.feature_budget;
            fo.default_products = c.default_products;
            r.features = features::engineer(train, r.verdicts, fo, c.max_features, c.threads, &r.ledger);
            train = r.features.table;
            std::vector<features::FeatureSpec> kept;
            for (const auto& k : r.features.kept) kept.push_back(k.spec);
            holdout = features::materialize_fitted(holdout, kept, c.threads);
        });
    } else {
        ctx.skip("features", "disabled by stages.feature_engineering");
        r.features.table = train;
    }

    if (c.max_cycles >= 2) {
        if (!c.hypothesis) {
            ctx.skip("hypothesis_cycle2", "hypothesis stage disabled");
        } else if (r.features.kept.empty()) {
            ctx.skip("hypothesis_cycle2", "no engineered features to test");
        } else {
            ctx.stage("hypothesis_cycle2", [&] {
                std::vector<std::string> engineered;
                for (const auto& k : r.features.kept) engineered.push_back(k.spec.name);
                engineered.push_back(c.target);
                std::vector<ColumnSummary> summaries;
                for (const auto& name : engineered) summaries.push_back(summarize(train.column(name)));
                auto docs = proposer::enumerate_templates(summaries, c.target, c.proposer.max_hypotheses);
                std::set<std::string> ids;
                for (const auto& d : r.docs) ids.insert(d.id);
                std::erase_if(docs, [&](const hypothesis::HypothesisDoc& d) { return ids.count(d.id) > 0; });
                LedgerEntry e = make_entry("hypothesis", "propose", {});
                e.params["proposer"] = std::string("templates");
                e.params["cycle"] = static_cast<std::int64_t>(2);
                e.results["docs"] = static_cast<std::int64_t>(docs.size());
                r.ledger.append(std::move(e));
                test_batch(c, docs, train, holdout, r);
            });
        }
    }

    ctx.stage("model", [&] {
        model::AgentOptions mo = c.model;
        mo.task = p.task;
        // exact linear copies add nothing, and train-only columns cannot be scored
        for (const auto& s : transforms)
            if (s.kind == preprocess::TransformKind::standard_scale) mo.exclude.push_back(s.source);
        for (const auto& col : train.columns())
            if (!holdout.has_column(col.name())) mo.exclude.push_back(col.name());
        r.model = model::train_and_evaluate(train, holdout, mo, &r.ledger);
    });

    ctx.stage("report", [&] {
        r.hypotheses_json = hypothesis::hypotheses_report(r.docs, r.verdicts, c.fdr);
        r.features_json = features::features_report(r.features);
        r.features_json["catalog"] = r.model.design.features;
        r.model_json = model::to_json(r.model);
        report::Inputs in;
        in.target = c.target;
        in.docs = &r.docs;
        in.verdicts = &r.verdicts;
        in.table = &train;
        in.features = &r.features;
        in.model = &r.model;
        in.notes = r.warnings;
        if (!c.hypothesis) in.notes.push_back("The hypothesis stage was disabled for this run.");
        if (!c.feature_engineering) in.notes.push_back("The feature engineering stage was disabled for this run.");
        r.report_json = report::build_report(in, &r.ledger);
        r.report_md = report::render_markdown(r.report_json);
    });

    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.start).count();
    LedgerEntry done = make_entry("pipeline", "complete", {});
    done.params["config"] = c.name;
    done.params["seed"] = static_cast<std::int64_t>(c.seed);
    done.results["hypotheses"] = static_cast<std::int64_t>(r.docs.size());
    done.results["features_kept"] = static_cast<std::int64_t>(r.features.kept.size());
    done.results["llm_cost"] = r.total_cost;
    if (c.wall_clock) done.results["seconds"] = r.wall_seconds;
    r.ledger.append(std::move(done));
    return r;
}

proposer::Proposal propose_only(const PipelineConfig& c, std::vector<std::string>* warnings) {
    ClockGuard clock(c.wall_clock);
    RunResult r;
    Context ctx{c, r};
    Prepared p = prepare(c, ctx);
    std::vector<std::string> w;
    auto prop = propose(c, p.train, r.ledger, w);
    if (warnings) *warnings = w;
    return prop;
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::stage, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorKind::stage, "cannot write " + path.string());
}

}  // namespace

void write_outputs(const RunResult& r, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::stage, "cannot create output directory " + dir.string() + ": " + ec.message());
    write_file(dir / "ledger.json", r.ledger.dump() + "\n");
    write_file(dir / "hypotheses.json", r.hypotheses_json.dump(2) + "\n");
    write_file(dir / "features.json", r.features_json.dump(2) + "\n");
    write_file(dir / "model.json", r.model_json.dump(2) + "\n");
    write_file(dir / "report.json", r.report_json.dump(2) + "\n");
    write_file(dir / "report.md", r.report_md);
    write_file(dir / "exchanges.jsonl", proposer::to_jsonl(r.exchanges));
}

std::vector<Toggles> grid_from_json(const json& j) {
    const json& list = j.is_object() && j.contains("configurations") ? j.at("configurations") : j;
    if (!list.is_array()) fail(ErrorKind::config, "grid must be a list of configurations");
    std::vector<Toggles> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        Reader r(list[i], "configurations[" + std::to_string(i) + "]");
        Toggles t;
        r.get("name", t.name);
        r.get("hypothesis", t.hypothesis);
        r.get("feature_engineering", t.feature_engineering);
        r.finish();
        if (t.name.empty()) fail(ErrorKind::config, "configuration " + std::to_string(i) + " needs a name");
        for (const auto& o : out)
            if (o.name == t.name) fail(ErrorKind::config, "configuration name " + t.name + " is used twice");
        out.push_back(std::move(t));
    }
    if (out.size() < 2) fail(ErrorKind::config, "ablation needs at least two configurations");
    return out;
}

std::vector<AblationRow> ablate(const PipelineConfig& base, const std::vector<Toggles>& grid, std::vector<RunResult>* runs) {
    if (grid.size() < 2) fail(ErrorKind::config, "ablation needs at least two configurations");
    std::vector<AblationRow> rows;
    for (const auto& t : grid) {
        PipelineConfig c = base;
        c.name = t.name;
        c.hypothesis = t.hypothesis;
        c.feature_engineering = t.feature_engineering;
        AblationRow row;
        row.toggles = t;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            RunResult r = run(c);
            row.ok = true;
            row.holdout = r.model.holdout.values();
            row.feature_count = r.model.design.features.size();
            if (runs) runs->push_back(std::move(r));
        } catch (const Error& e) {
            row.error = e.what();
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::vector<std::string> metric_names(const std::vector<AblationRow>& rows) {
    std::set<std::string> names;
    for (const auto& r : rows)
        for (const auto& [k, _] : r.holdout) names.insert(k);
    return {names.begin(), names.end()};
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}

}  // namespace

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    const auto metrics = metric_names(rows);
    std::string out = "configuration,hypothesis,feature_engineering,status";
    for (const auto& m : metrics) out += "," + m;
    out += ",features,seconds,error\n";
    for (const auto& r : rows) {
        out += csv_field(r.toggles.name) + "," + (r.toggles.hypothesis ? "on" : "off") + "," + (r.toggles.feature_engineering ? "on" : "off") +
               "," + (r.ok ? "ok" : "failed");
        for (const auto& m : metrics) out += "," + (r.holdout.count(m) ? fmt("%.6f", r.holdout.at(m)) : std::string());
        out += "," + std::to_string(r.feature_count) + "," + fmt("%.3f", r.seconds) + "," + csv_field(r.error) + "\n";
    }
    return out;
}

std::string ablation_markdown(const std::vector<AblationRow>& rows) {
    const auto metrics = metric_names(rows);
    std::string out = "| Configuration | Hypothesis | Feature engineering |";
    for (const auto& m : metrics) out += " " + m + " |";
    out += " Features | Run time (s) |\n|---|---|---|";
    for (std::size_t i = 0; i < metrics.size(); ++i) out += "---|";
    out += "---|---|\n";
    for (const auto& r : rows) {
        out += "| " + r.toggles.name + " | " + (r.toggles.hypothesis ? "on" : "off") + " | " + (r.toggles.feature_engineering ? "on" : "off") +
               " |";
        for (const auto& m : metrics) out += " " + (r.ok && r.holdout.count(m) ? fmt("%.4f", r.holdout.at(m)) : std::string("failed")) + " |";
        out += " " + std::to_string(r.feature_count) + " | " + fmt("%.2f", r.seconds) + " |\n";
    }
    return out;
}

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::config: return 2;
        case ErrorKind::data:
        case ErrorKind::schema: return 3;
        case ErrorKind::budget: return 5;
        default: return 4;
    }
}

}  // namespace autods::pipeline
