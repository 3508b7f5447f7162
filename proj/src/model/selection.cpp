#include "autods/model/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "autods/error.hpp"
#include "autods/parallel.hpp"
#include "autods/rng.hpp"

namespace autods::model {

namespace {

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

std::vector<double> select(std::span<const double> y, const std::vector<std::size_t>& rows) {
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = y[rows[i]];
    return out;
}

int algorithm_rank(Algorithm a) {
    switch (a) {
        case Algorithm::linear_regression:
        case Algorithm::ridge:
        case Algorithm::lasso:
        case Algorithm::logistic_regression: return 0;
        case Algorithm::knn: return 1;
        case Algorithm::decision_tree: return 2;
        case Algorithm::gradient_boosting: return 3;
        case Algorithm::random_forest: return 4;
    }
    return 5;
}

}  // namespace

std::vector<Fold> make_folds(std::size_t n, std::size_t k, std::uint64_t seed,
                             std::optional<std::span<const double>> labels, std::vector<std::string>* warnings) {
    if (k < 2) fail(ErrorKind::config, "cross-validation needs at least 2 folds");
    if (n < k) fail(ErrorKind::domain, "fewer rows (" + std::to_string(n) + ") than folds (" + std::to_string(k) + ")");
    if (labels && labels->size() != n) fail(ErrorKind::domain, "labels do not match the number of rows");
    Rng rng(derive_seed(seed, "folds"));
    std::vector<std::size_t> fold_of(n);
    if (!labels) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        shuffle(order, rng);
        for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = i % k;
    } else {
        std::map<double, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < n; ++i) by_class[(*labels)[i]].push_back(i);
        std::size_t next = 0;  // continue the deal across classes so fold sizes stay balanced
        for (auto& [label, rows] : by_class) {
            shuffle(rows, rng);
            for (std::size_t r : rows) fold_of[r] = next++ % k;
        }
    }
    std::vector<Fold> folds(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t f = 0; f < k; ++f) (f == fold_of[i] ? folds[f].test : folds[f].train).push_back(i);
    }
    if (labels) {
        std::vector<double> classes(labels->begin(), labels->end());
        std::sort(classes.begin(), classes.end());
        classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
        for (std::size_t f = 0; f < k; ++f) {
            for (double c : classes) {
                auto& fold = folds[f];
                const bool in_train = std::any_of(fold.train.begin(), fold.train.end(),
                                                  [&](std::size_t r) { return (*labels)[r] == c; });
                if (in_train) continue;
                const auto it = std::find_if(fold.test.begin(), fold.test.end(),
                                             [&](std::size_t r) { return (*labels)[r] == c; });
                if (it == fold.test.end()) continue;
                fold.train.insert(std::lower_bound(fold.train.begin(), fold.train.end(), *it), *it);
                fold.test.erase(it);
                if (warnings) {
                    warnings->push_back("fold " + std::to_string(f) + " had no training rows of class " +
                                        std::to_string(c) + ": moved one test row into training");
                }
            }
        }
    }
    return folds;
}

CvResult cross_validate(const ModelSpec& spec, const Matrix& x, std::span<const double> y, const CvOptions& options) {
    validate(spec);
    CvResult result;
    result.spec = spec;
    result.label = spec.label();
    const bool stratify = options.stratified && spec.task == Task::classification;
    const auto folds = make_folds(x.rows(), options.folds, options.seed,
                                  stratify ? std::optional<std::span<const double>>(y) : std::nullopt, &result.warnings);
    result.fold_metrics.resize(folds.size());
    parallel_for(folds.size(), options.threads, [&](std::size_t f) {
        const auto& fold = folds[f];
        const auto model = train(spec, x.select_rows(fold.train), select(y, fold.train));
        const auto pred = model->predict(x.select_rows(fold.test));
        result.fold_metrics[f] = compute_metrics(select(y, fold.test), pred, spec.task, options.positive_label);
    });
    for (std::size_t f = 0; f < folds.size(); ++f) {
        for (const auto& w : result.fold_metrics[f].warnings) result.warnings.push_back("fold " + std::to_string(f) + ": " + w);
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

std::vector<double> complexity(const ModelSpec& s) {
    std::vector<double> key{static_cast<double>(algorithm_rank(s.algorithm))};
    switch (s.algorithm) {
        case Algorithm::linear_regression: break;
        case Algorithm::ridge:
        case Algorithm::lasso:
        case Algorithm::logistic_regression: key.push_back(-s.param("lambda")); break;
        case Algorithm::knn: key.push_back(-s.param("k")); break;
        case Algorithm::decision_tree:
            key.push_back(s.param("max_depth"));
            key.push_back(-s.param("min_samples_leaf"));
            break;
        case Algorithm::random_forest:
            key.push_back(s.param("n_trees"));
            key.push_back(s.param("max_depth"));
            key.push_back(-s.param("min_samples_leaf"));
            break;
        case Algorithm::gradient_boosting:
            key.push_back(s.param("rounds"));
            key.push_back(s.param("max_depth"));
            key.push_back(-s.param("min_samples_leaf"));
            break;
    }
    return key;
}

bool better(const CvResult& a, const CvResult& b) {
    const double pa = a.primary(), pb = b.primary();
    const double tol = 1e-12 * std::max({1.0, std::fabs(pa), std::fabs(pb)});
    if (pa > pb + tol) return true;
    if (pb > pa + tol) return false;
    const auto ca = complexity(a.spec), cb = complexity(b.spec);
    if (ca != cb) return ca < cb;
    return a.label < b.label;
}

std::vector<ModelSpec> expand_grid(Algorithm algorithm, Task task, const std::map<std::string, std::vector<double>>& grid,
                                   std::uint64_t seed) {
    std::vector<ModelSpec> out(1);
    out[0].algorithm = algorithm;
    out[0].task = task;
    out[0].seed = seed;
    for (const auto& [name, values] : grid) {
        if (values.empty()) fail(ErrorKind::config, "empty value list for hyperparameter " + name);
        std::vector<ModelSpec> next;
        for (const auto& base : out) {
            for (double v : values) {
                ModelSpec s = base;
                s.params[name] = v;
                next.push_back(std::move(s));
            }
        }
        out = std::move(next);
    }
    for (const auto& s : out) validate(s);
    return out;
}

std::map<std::string, std::vector<double>> default_grid(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::linear_regression: return {};
        case Algorithm::ridge: return {{"lambda", {0.01, 0.1, 1, 10, 100}}};
        case Algorithm::lasso: return {{"lambda", {0.001, 0.01, 0.1}}};
        case Algorithm::logistic_regression: return {{"lambda", {0.001, 0.1, 1}}};
        case Algorithm::knn: return {{"k", {5, 15, 31}}};
        case Algorithm::decision_tree: return {{"max_depth", {3, 5, 8}}, {"min_samples_leaf", {5}}};
        case Algorithm::random_forest: return {{"n_trees", {40}}, {"max_depth", {6, 10}}};
        case Algorithm::gradient_boosting: return {{"rounds", {50, 100}}, {"max_depth", {2, 3}}};
    }
    return {};
}

SearchResult search(const std::vector<ModelSpec>& candidates, const Matrix& x, std::span<const double> y,
                    std::size_t budget, const CvOptions& options) {
    if (budget < 1) fail(ErrorKind::config, "search budget must be >= 1");
    if (candidates.empty()) fail(ErrorKind::config, "search needs at least one candidate");
    std::vector<std::size_t> chosen(candidates.size());
    std::iota(chosen.begin(), chosen.end(), 0);
    SearchResult result;
    if (chosen.size() > budget) {
        Rng rng(derive_seed(options.seed, "search"));
        shuffle(chosen, rng);
        chosen.resize(budget);
        std::sort(chosen.begin(), chosen.end());
        result.skipped = candidates.size() - budget;
    }
    for (std::size_t i : chosen) {
        result.trials.push_back(cross_validate(candidates[i], x, y, options));
        if (result.trials.size() > 1 && better(result.trials.back(), result.trials[result.best])) {
            result.best = result.trials.size() - 1;
        }
    }
    return result;
}

Matrix oof_meta_features(const std::vector<ModelSpec>& members, const Matrix& x, std::span<const double> y,
                         std::size_t folds, std::uint64_t seed, unsigned threads) {
    if (members.empty()) fail(ErrorKind::config, "stacking needs base models");
    const auto split = make_folds(x.rows(), folds, derive_seed(seed, "stacking"));
    Matrix out(x.rows(), members.size());
    std::vector<Matrix> per_fold(split.size());
    parallel_for(split.size(), threads, [&](std::size_t f) {
        const Matrix xtrain = x.select_rows(split[f].train);
        const auto ytrain = select(y, split[f].train);
        std::vector<ModelPtr> fitted;
        for (const auto& spec : members) fitted.push_back(train(spec, xtrain, ytrain));
        per_fold[f] = meta_features(fitted, x.select_rows(split[f].test));
    });
    for (std::size_t f = 0; f < split.size(); ++f) {
        for (std::size_t i = 0; i < split[f].test.size(); ++i) {
            for (std::size_t m = 0; m < members.size(); ++m) out(split[f].test[i], m) = per_fold[f](i, m);
        }
    }
    return out;
}

ModelPtr train_stacking(const std::vector<ModelSpec>& members, const ModelSpec& meta, const Matrix& x,
                        std::span<const double> y, std::size_t folds, std::uint64_t seed, unsigned threads) {
    if (members.size() < 2) fail(ErrorKind::domain, "an ensemble needs at least 2 base models");
    for (const auto& m : members) {
        if (m.task != meta.task) fail(ErrorKind::domain, "ensemble members mix classification and regression");
    }
    const Matrix oof = oof_meta_features(members, x, y, folds, seed, threads);
    std::vector<ModelPtr> fitted(members.size());
    parallel_for(members.size(), threads, [&](std::size_t m) { fitted[m] = train(members[m], x, y); });
    return make_stacking(std::move(fitted), train(meta, oof, y));
}

nlohmann::json to_json(const CvResult& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& m : r.fold_metrics) folds.push_back(to_json(m));
    nlohmann::json j{{"spec", to_json(r.spec)}, {"label", r.label}, {"mean", r.mean}, {"sd", r.sd}, {"folds", folds}};
    if (!r.warnings.empty()) j["warnings"] = r.warnings;
    return j;
}

}  // namespace autods::model
