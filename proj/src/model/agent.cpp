#include "autods/model/agent.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "autods/error.hpp"
#include "autods/parallel.hpp"
#include "autods/rng.hpp"

namespace autods::model {

using nlohmann::json;

namespace {

std::vector<double> pick(std::span<const double> y, const std::vector<std::size_t>& rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(y[r]);
    return out;
}

ModelSpec meta_spec(Task task, std::uint64_t seed) {
    ModelSpec m;
    m.task = task;
    m.algorithm = task == Task::classification ? Algorithm::logistic_regression : Algorithm::ridge;
    m.params["lambda"] = 1.0;
    m.seed = derive_seed(seed, "meta");
    return m;
}

ModelPtr fit_ensemble(const std::string& kind, const std::vector<ModelSpec>& members, const Matrix& x, std::span<const double> y,
                      std::size_t folds, std::uint64_t seed, unsigned threads) {
    if (kind == "stacking") return train_stacking(members, meta_spec(members.front().task, seed), x, y, folds, seed, threads);
    std::vector<ModelPtr> fitted(members.size());
    parallel_for(members.size(), threads, [&](std::size_t i) { fitted[i] = train(members[i], x, y); });
    return make_voting(std::move(fitted));
}

// Same folds as cross_validate so the comparison with single models is paired.
CvResult cv_ensemble(const std::string& kind, const std::vector<ModelSpec>& members, const Matrix& x, std::span<const double> y,
                     const CvOptions& options) {
    CvResult result;
    result.spec = members.front();
    result.label = kind + "(";
    for (std::size_t i = 0; i < members.size(); ++i) result.label += (i ? ", " : "") + members[i].label();
    result.label += ")";
    const Task task = members.front().task;
    const bool stratify = options.stratified && task == Task::classification;
    const auto folds = make_folds(x.rows(), options.folds, options.seed,
                                  stratify ? std::optional<std::span<const double>>(y) : std::nullopt, &result.warnings);
    result.fold_metrics.resize(folds.size());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const auto& fold = folds[f];
        const auto ytrain = pick(y, fold.train);
        const auto m = fit_ensemble(kind, members, x.select_rows(fold.train), ytrain, options.folds, derive_seed(options.seed, f),
                                    options.threads);
        result.fold_metrics[f] = compute_metrics(pick(y, fold.test), m->predict(x.select_rows(fold.test)), task, options.positive_label);
    }
    const double k = static_cast<double>(folds.size());
    for (const auto& [name, _] : result.fold_metrics.front().values()) {
        double sum = 0.0;
        for (const auto& m : result.fold_metrics) sum += m.get(name);
        const double mean = sum / k;
        double ss = 0.0;
        for (const auto& m : result.fold_metrics) ss += (m.get(name) - mean) * (m.get(name) - mean);
        result.mean[name] = mean;
        result.sd[name] = std::sqrt(ss / (k - 1.0));
    }
    return result;
}

}  // namespace

Matrix Design::matrix(const DataTable& table) const {
    Matrix x(table.n_rows(), features.size());
    for (std::size_t j = 0; j < features.size(); ++j) {
        const Column& c = table.column(features[j]);
        if (c.kind() != ColumnKind::numeric && c.kind() != ColumnKind::boolean)
            fail(ErrorKind::schema, "feature '" + features[j] + "' is " + to_string(c.kind()) + ", not numeric");
        for (std::size_t r = 0; r < table.n_rows(); ++r) x(r, j) = c.is_missing(r) ? fill[j] : c.number(r);
    }
    return x;
}

std::vector<double> Design::target_values(const DataTable& table) const {
    const Column& t = table.column(target);
    std::vector<double> y(table.n_rows());
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        if (t.is_missing(r)) fail(ErrorKind::data, "target '" + target + "' is missing in row " + std::to_string(r));
        if (task == Task::regression || t.kind() != ColumnKind::categorical) {
            y[r] = t.number(r);
            continue;
        }
        const auto it = std::find(labels.begin(), labels.end(), t.text(r));
        if (it == labels.end()) fail(ErrorKind::data, "unknown class '" + t.text(r) + "' in target '" + target + "'");
        y[r] = static_cast<double>(it - labels.begin());
    }
    return y;
}

Task infer_task(const Column& t) {
    if (t.kind() == ColumnKind::boolean || t.kind() == ColumnKind::categorical) return Task::classification;
    if (t.kind() == ColumnKind::datetime) fail(ErrorKind::config, "target '" + t.name() + "' is a datetime column");
    const ColumnSummary s = summarize(t);
    return s.numeric && s.numeric->integer_valued && s.distinct_count <= 10 ? Task::classification : Task::regression;
}

Design make_design(const DataTable& train, const std::string& target, Task task, const std::vector<std::string>& exclude) {
    Design d;
    d.target = target;
    d.task = task;
    const Column& t = train.column(target);
    if (task == Task::regression && t.kind() == ColumnKind::categorical)
        fail(ErrorKind::config, "regression target '" + target + "' is categorical");
    if (task == Task::classification) {
        std::set<std::string> seen;
        if (t.kind() == ColumnKind::categorical) {
            for (std::size_t r = 0; r < t.size(); ++r)
                if (!t.is_missing(r)) seen.insert(t.text(r));
            d.labels.assign(seen.begin(), seen.end());
            d.positive_label = static_cast<double>(d.labels.size()) - 1.0;
        } else {
            std::set<double> vals;
            for (std::size_t r = 0; r < t.size(); ++r)
                if (!t.is_missing(r)) vals.insert(t.number(r));
            for (double v : vals) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.17g", v);
                d.labels.push_back(t.kind() == ColumnKind::boolean ? (v != 0 ? "true" : "false") : buf);
            }
            d.positive_label = vals.empty() ? 1.0 : *vals.rbegin();
        }
        if (d.labels.size() < 2) fail(ErrorKind::data, "target '" + target + "' has fewer than two classes");
    }
    for (const Column& c : train.columns()) {
        if (c.name() == target || std::find(exclude.begin(), exclude.end(), c.name()) != exclude.end()) continue;
        if (c.kind() != ColumnKind::numeric && c.kind() != ColumnKind::boolean) continue;
        auto present = c.present_numbers();
        if (present.empty()) continue;
        d.features.push_back(c.name());
        d.fill.push_back(quantile(std::move(present), 0.5));
    }
    if (d.features.empty()) fail(ErrorKind::data, "no numeric feature columns to model");
    return d;
}

const char* to_string(EnsemblePolicy p) noexcept {
    switch (p) {
        case EnsemblePolicy::none: return "none";
        case EnsemblePolicy::voting: return "voting";
        case EnsemblePolicy::stacking: return "stacking";
        case EnsemblePolicy::automatic: return "auto";
    }
    return "auto";
}

EnsemblePolicy parse_ensemble_policy(const std::string& text) {
    for (auto p : {EnsemblePolicy::none, EnsemblePolicy::voting, EnsemblePolicy::stacking, EnsemblePolicy::automatic})
        if (text == to_string(p)) return p;
    fail(ErrorKind::config, "unknown ensemble policy '" + text + "' (none, voting, stacking, auto)");
}

ModelReport train_and_evaluate(const DataTable& train_table, const DataTable& holdout, const AgentOptions& o, MetadataLedger* ledger) {
    if (o.folds < 2) fail(ErrorKind::config, "cross-validation needs at least 2 folds");
    const Task task = o.task ? *o.task : infer_task(train_table.column(o.target));
    ModelReport r;
    r.design = make_design(train_table, o.target, task, o.exclude);
    const Matrix x = r.design.matrix(train_table);
    const std::vector<double> y = r.design.target_values(train_table);
    if (x.rows() < o.folds) fail(ErrorKind::data, "fewer training rows than folds");

    std::vector<Algorithm> algorithms = o.algorithms;
    if (algorithms.empty()) {
        for (auto a : {Algorithm::linear_regression, Algorithm::ridge, Algorithm::lasso, Algorithm::logistic_regression, Algorithm::knn,
                       Algorithm::decision_tree, Algorithm::random_forest, Algorithm::gradient_boosting})
            if (supports(a, task)) algorithms.push_back(a);
    }
    const bool multiclass = task == Task::classification && r.design.labels.size() > 2;
    std::vector<ModelSpec> candidates;
    for (auto a : algorithms) {
        if (!supports(a, task)) fail(ErrorKind::config, std::string(to_string(a)) + " does not support " + to_string(task));
        if (multiclass && a == Algorithm::gradient_boosting) continue;
        for (auto& s : expand_grid(a, task, default_grid(a), derive_seed(o.seed, to_string(a)))) candidates.push_back(std::move(s));
    }
    if (candidates.empty()) fail(ErrorKind::config, "no model candidates for this task");

    CvOptions cv;
    cv.folds = o.folds;
    cv.seed = derive_seed(o.seed, "cv");
    cv.positive_label = r.design.positive_label;
    cv.threads = o.threads;
    r.search = search(candidates, x, y, o.search_budget, cv);
    for (const auto& t : r.search.trials) {
        LedgerEntry e = make_entry("model", "cv", {});
        e.params["model"] = t.label;
        e.params["folds"] = static_cast<std::int64_t>(o.folds);
        for (const auto& [k, v] : t.mean) e.results[k] = make_scalar(v);
        for (const auto& [k, v] : t.sd) e.results[k + "_sd"] = make_scalar(v);
        record(ledger, std::move(e));
    }

    const CvResult& best = r.search.winner();
    r.chosen_kind = "single";
    r.chosen_label = best.label;
    r.members = {best.label};
    r.cv_primary = best.primary();
    std::vector<ModelSpec> member_specs = {best.spec};

    if (o.ensemble != EnsemblePolicy::none && o.ensemble_size >= 2) {
        std::vector<std::size_t> order(r.search.trials.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return better(r.search.trials[a], r.search.trials[b]); });
        std::vector<ModelSpec> top;
        std::set<Algorithm> used;
        for (std::size_t i : order) {
            if (top.size() >= o.ensemble_size) break;
            if (used.insert(r.search.trials[i].spec.algorithm).second) top.push_back(r.search.trials[i].spec);
        }
        std::vector<std::string> kinds;
        if (o.ensemble == EnsemblePolicy::voting || o.ensemble == EnsemblePolicy::automatic) kinds.push_back("voting");
        if ((o.ensemble == EnsemblePolicy::stacking || o.ensemble == EnsemblePolicy::automatic) && !multiclass) kinds.push_back("stacking");
        if (top.size() >= 2) {
            for (const auto& kind : kinds) {
                CvResult e = cv_ensemble(kind, top, x, y, cv);
                LedgerEntry entry = make_entry("model", "cv", {});
                entry.params["model"] = e.label;
                entry.params["folds"] = static_cast<std::int64_t>(o.folds);
                for (const auto& [k, v] : e.mean) entry.results[k] = make_scalar(v);
                record(ledger, std::move(entry));
                if (e.primary() > r.cv_primary) {
                    r.cv_primary = e.primary();
                    r.chosen_kind = kind;
                    r.chosen_label = e.label;
                    member_specs = top;
                    r.members.clear();
                    for (const auto& s : top) r.members.push_back(s.label());
                }
                r.ensembles.push_back(std::move(e));
            }
        }
    }

    if (r.chosen_kind == "single") {
        TrainOptions to;
        to.threads = o.threads;
        r.model = autods::model::train(member_specs.front(), x, y, to);
    } else {
        r.model = fit_ensemble(r.chosen_kind, member_specs, x, y, o.folds, derive_seed(o.seed, "final"), o.threads);
    }

    const Matrix hx = r.design.matrix(holdout);
    const std::vector<double> hy = r.design.target_values(holdout);
    r.holdout_rows = holdout.n_rows();
    r.holdout = compute_metrics(hy, r.model->predict(hx), task, r.design.positive_label);

    const auto& imp = r.model->feature_importances();
    for (std::size_t j = 0; j < imp.size() && j < r.design.features.size(); ++j) r.importances.emplace_back(r.design.features[j], imp[j]);
    std::stable_sort(r.importances.begin(), r.importances.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    LedgerEntry sel = make_entry("model", "select", {});
    sel.params["policy"] = to_string(o.ensemble);
    sel.params["candidates"] = static_cast<std::int64_t>(candidates.size());
    sel.params["evaluated"] = static_cast<std::int64_t>(r.search.trials.size());
    sel.results["chosen"] = r.chosen_label;
    sel.results["kind"] = r.chosen_kind;
    sel.results["cv_" + std::string(primary_metric(task))] = make_scalar(r.cv_primary);
    record(ledger, std::move(sel));
    LedgerEntry hold = make_entry("model", "holdout", {});
    hold.params["rows"] = static_cast<std::int64_t>(holdout.n_rows());
    for (const auto& [k, v] : r.holdout.values()) hold.results[k] = make_scalar(v);
    for (std::size_t i = 0; i < r.holdout.warnings.size(); ++i) hold.results["warning." + std::to_string(i)] = r.holdout.warnings[i];
    record(ledger, std::move(hold));
    return r;
}

json to_json(const ModelReport& r) {
    json trials = json::array();
    for (const auto& t : r.search.trials) trials.push_back(to_json(t));
    json ens = json::array();
    for (const auto& e : r.ensembles) ens.push_back(to_json(e));
    json imp = json::array();
    for (const auto& [name, v] : r.importances) imp.push_back({{"feature", name}, {"importance", v}});
    return {{"task", to_string(r.design.task)},
            {"target", r.design.target},
            {"labels", r.design.labels},
            {"features", r.design.features},
            {"fill", r.design.fill},
            {"trials", std::move(trials)},
            {"skipped_candidates", r.search.skipped},
            {"ensembles", std::move(ens)},
            {"chosen", {{"kind", r.chosen_kind}, {"label", r.chosen_label}, {"members", r.members}}},
            {"cv_primary", {{"metric", primary_metric(r.design.task)}, {"value", r.cv_primary}}},
            {"holdout", to_json(r.holdout)},
            {"importances", std::move(imp)},
            {"model", r.model ? r.model->to_json() : json(nullptr)}};
}

}  // namespace autods::model
