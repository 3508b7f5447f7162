#include "autods/hypothesis/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "autods/error.hpp"
#include "autods/parallel.hpp"
#include "autods/rng.hpp"

namespace autods::hypothesis {

using nlohmann::json;

const char* to_string(Fdr f) noexcept {
    return f == Fdr::benjamini_hochberg ? "benjamini_hochberg" : "none";
}

Fdr parse_fdr(const std::string& text) {
    if (text == "none") return Fdr::none;
    if (text == "benjamini_hochberg" || text == "bh") return Fdr::benjamini_hochberg;
    fail(ErrorKind::config, "unknown fdr method '" + text + "' (none|benjamini_hochberg)");
}

std::vector<double> bh_adjust(std::span<const double> p) {
    const std::size_t m = p.size();
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::domain, "p-values must lie in [0, 1]");
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    std::vector<double> out(m);
    double running = 1.0;
    for (std::size_t r = m; r-- > 0;) {
        const std::size_t i = order[r];
        running = std::min(running, p[i] * static_cast<double>(m) / static_cast<double>(r + 1));
        out[i] = std::max(p[i], std::min(1.0, running));
    }
    return out;
}

namespace {

json number(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

double read_number(const json& j) {
    if (j.is_number()) return j.get<double>();
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
}

json result_json(const stats::TestResult& r) {
    json out = {{"statistic", number(r.statistic)}, {"p_value", number(r.p_value)}, {"dof", number(r.dof)},
                {"dof2", number(r.dof2)}, {"n_used", r.n_used}, {"n_excluded", r.n_excluded}};
    out["effect"] = r.effect ? number(*r.effect) : json(nullptr);
    return out;
}

stats::TestResult result_from_json(const json& j) {
    stats::TestResult r;
    r.statistic = read_number(j.at("statistic"));
    r.p_value = read_number(j.at("p_value"));
    r.dof = read_number(j.at("dof"));
    r.dof2 = read_number(j.at("dof2"));
    r.n_used = j.at("n_used").get<std::size_t>();
    r.n_excluded = j.at("n_excluded").get<std::size_t>();
    if (!j.at("effect").is_null()) r.effect = read_number(j.at("effect"));
    return r;
}

struct Execution {
    std::optional<ExecutableTest> exe;
    TestOutcome outcome;
    std::optional<std::string> error;
};

std::string describe(const std::exception& e) {
    if (const auto* v = dynamic_cast<const ValidationError*>(&e)) {
        std::string out;
        for (const auto& i : v->issues()) out += (out.empty() ? "" : "; ") + i;
        return out;
    }
    return e.what();
}

}  // namespace

json to_json(const HypothesisVerdict& v) {
    json out = {{"doc_id", v.doc_id},
                {"statement", v.statement},
                {"kind", to_string(v.kind)},
                {"operation", v.operation},
                {"columns", v.columns},
                {"result", result_json(v.result)},
                {"alpha", v.alpha},
                {"adjusted_p", number(v.adjusted_p)},
                {"accepted", v.accepted},
                {"descriptive", v.descriptive},
                {"attached_columns", v.attached_columns},
                {"details", v.details}};
    out["indicator_column"] = v.indicator_column ? json(*v.indicator_column) : json(nullptr);
    out["error"] = v.error ? json(*v.error) : json(nullptr);
    return out;
}

HypothesisVerdict verdict_from_json(const json& j) {
    try {
        HypothesisVerdict v;
        v.doc_id = j.at("doc_id").get<std::string>();
        v.statement = j.at("statement").get<std::string>();
        const auto kind = parse_test_kind(j.at("kind").get<std::string>());
        if (!kind) fail(ErrorKind::data, "unknown test kind in verdict");
        v.kind = *kind;
        v.operation = j.at("operation").get<std::string>();
        v.columns = j.at("columns").get<std::vector<std::string>>();
        v.result = result_from_json(j.at("result"));
        v.alpha = j.at("alpha").get<double>();
        v.adjusted_p = read_number(j.at("adjusted_p"));
        v.accepted = j.at("accepted").get<bool>();
        v.descriptive = j.at("descriptive").get<bool>();
        v.attached_columns = j.at("attached_columns").get<std::vector<std::string>>();
        v.details = j.at("details");
        if (!j.at("indicator_column").is_null()) v.indicator_column = j.at("indicator_column").get<std::string>();
        if (!j.at("error").is_null()) v.error = j.at("error").get<std::string>();
        return v;
    } catch (const json::exception& e) {
        fail(ErrorKind::data, std::string("malformed verdict: ") + e.what());
    }
}

BatchResult run_batch(const DataTable& table, const std::vector<HypothesisDoc>& docs, const BatchOptions& options,
                      MetadataLedger* ledger) {
    const std::size_t n = docs.size();
    std::vector<Execution> runs(n);
    parallel_for(n, options.threads, [&](std::size_t i) {
        Execution& ex = runs[i];
        try {
            ex.exe = compile(docs[i], table);
            ex.outcome = ex.exe->run(table, derive_seed(options.seed, docs[i].id));
        } catch (const std::exception& e) {
            ex.error = describe(e);
        }
    });

    BatchResult out;
    out.verdicts.resize(n);
    std::vector<std::size_t> family;
    for (std::size_t i = 0; i < n; ++i) {
        HypothesisVerdict& v = out.verdicts[i];
        const HypothesisDoc& d = docs[i];
        v.doc_id = d.id;
        v.statement = d.statement;
        v.kind = d.test.kind;
        v.operation = runs[i].exe ? runs[i].exe->operation : operation_name(d.test.kind);
        if (runs[i].exe) v.columns = runs[i].exe->columns;
        v.alpha = d.alpha;
        v.descriptive = is_descriptive(d.test.kind);
        v.error = runs[i].error;
        if (v.error) continue;
        v.result = runs[i].outcome.result;
        v.details = runs[i].outcome.details;
        if (!std::isfinite(v.result.p_value)) {
            v.error = "test produced a non-finite p-value";
            continue;
        }
        v.adjusted_p = v.result.p_value;
        if (!v.descriptive) family.push_back(i);
    }
    if (options.fdr == Fdr::benjamini_hochberg && !family.empty()) {
        std::vector<double> raw;
        for (std::size_t i : family) raw.push_back(out.verdicts[i].result.p_value);
        const auto adj = bh_adjust(raw);
        for (std::size_t k = 0; k < family.size(); ++k) out.verdicts[family[k]].adjusted_p = adj[k];
    }

    DataTable result = table;
    std::vector<std::string> added;
    for (std::size_t i = 0; i < n; ++i) {
        HypothesisVerdict& v = out.verdicts[i];
        const HypothesisDoc& d = docs[i];
        if (!v.error) {
            v.accepted = v.adjusted_p < v.alpha;
            std::vector<Column> columns;
            if (v.accepted && v.descriptive) {
                columns = runs[i].outcome.attachments;
            } else if (v.accepted && d.indicator) {
                const Mask m = eval_condition(*d.indicator, table);
                std::vector<bool> values(m.size());
                for (std::size_t r = 0; r < m.size(); ++r) values[r] = m.is_true(r);
                columns.push_back(Column::boolean("hyp_" + d.id, values, m.missing));
            }
            const bool clash = std::any_of(columns.begin(), columns.end(), [&](const Column& c) { return result.has_column(c.name()); });
            if (clash) {
                v.error = "indicator column already exists";
                v.accepted = false;
                v.adjusted_p = 1.0;
            } else {
                for (auto& c : columns) {
                    if (v.descriptive) {
                        v.attached_columns.push_back(c.name());
                    } else {
                        v.indicator_column = c.name();
                    }
                    added.push_back(c.name());
                    result = result.with_column(std::move(c));
                }
            }
        }
        if (v.error) {
            v.accepted = false;
            v.adjusted_p = 1.0;
        }

        LedgerEntry e = make_entry("hypothesis", "test", runs[i].exe ? runs[i].exe->columns : std::vector<std::string>{});
        e.params["id"] = d.id;
        e.params["statement"] = d.statement;
        e.params["kind"] = std::string(to_string(d.test.kind));
        e.params["operation"] = v.operation;
        e.params["alpha"] = d.alpha;
        e.params["seed"] = std::to_string(derive_seed(options.seed, d.id));
        if (d.indicator) e.params["indicator"] = to_string(*d.indicator);
        e.results["statistic"] = make_scalar(v.result.statistic);
        e.results["p_value"] = make_scalar(v.result.p_value);
        e.results["adjusted_p"] = make_scalar(v.adjusted_p);
        e.results["accepted"] = v.accepted;
        e.results["verdict"] = std::string(v.accepted ? "accepted" : "rejected");
        e.results["n_used"] = static_cast<std::int64_t>(v.result.n_used);
        e.results["n_excluded"] = static_cast<std::int64_t>(v.result.n_excluded);
        if (v.result.effect) e.results["effect"] = make_scalar(*v.result.effect);
        if (v.indicator_column) e.results["indicator_column"] = *v.indicator_column;
        for (std::size_t k = 0; k < v.attached_columns.size(); ++k) e.results["attached." + std::to_string(k)] = v.attached_columns[k];
        if (v.error) e.results["error"] = *v.error;
        e.provenance = {"hypothesis:" + d.id};
        record(ledger, std::move(e));
    }

    LedgerEntry summary = make_entry("hypothesis", "batch", added);
    summary.params["fdr"] = std::string(to_string(options.fdr));
    summary.params["seed"] = std::to_string(options.seed);
    summary.results["tested"] = static_cast<std::int64_t>(n);
    summary.results["accepted"] = static_cast<std::int64_t>(
        std::count_if(out.verdicts.begin(), out.verdicts.end(), [](const HypothesisVerdict& v) { return v.accepted; }));
    summary.results["errors"] = static_cast<std::int64_t>(
        std::count_if(out.verdicts.begin(), out.verdicts.end(), [](const HypothesisVerdict& v) { return v.error.has_value(); }));
    summary.results["columns_added"] = static_cast<std::int64_t>(added.size());
    record(ledger, std::move(summary));

    out.table = std::move(result);
    return out;
}

json hypotheses_report(const std::vector<HypothesisDoc>& docs, const std::vector<HypothesisVerdict>& verdicts, Fdr fdr) {
    json items = json::array();
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        const HypothesisVerdict& v = verdicts[i];
        auto d = std::find_if(docs.begin(), docs.end(), [&](const HypothesisDoc& x) { return x.id == v.doc_id; });
        items.push_back({{"doc", d == docs.end() ? json(nullptr) : to_json(*d)}, {"verdict", to_json(v)}});
    }
    const auto accepted = std::count_if(verdicts.begin(), verdicts.end(), [](const HypothesisVerdict& v) { return v.accepted; });
    return {{"fdr", to_string(fdr)}, {"tested", verdicts.size()}, {"accepted", accepted}, {"hypotheses", items}};
}

}  // namespace autods::hypothesis
