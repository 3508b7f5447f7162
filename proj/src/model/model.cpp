#include "autods/model/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "autods/error.hpp"
#include "autods/model/tree.hpp"
#include "autods/parallel.hpp"
#include "autods/rng.hpp"

namespace autods::model {

using nlohmann::json;

const char* to_string(Task t) noexcept { return t == Task::classification ? "classification" : "regression"; }

const char* to_string(Algorithm a) noexcept {
    switch (a) {
        case Algorithm::linear_regression: return "linear_regression";
        case Algorithm::ridge: return "ridge";
        case Algorithm::lasso: return "lasso";
        case Algorithm::logistic_regression: return "logistic_regression";
        case Algorithm::knn: return "knn";
        case Algorithm::decision_tree: return "decision_tree";
        case Algorithm::random_forest: return "random_forest";
        case Algorithm::gradient_boosting: return "gradient_boosting";
    }
    return "?";
}

Task parse_task(const std::string& text) {
    if (text == "classification") return Task::classification;
    if (text == "regression") return Task::regression;
    fail(ErrorKind::config, "unknown task '" + text + "' (expected classification or regression)");
}

Algorithm parse_algorithm(const std::string& text) {
    for (auto a : {Algorithm::linear_regression, Algorithm::ridge, Algorithm::lasso, Algorithm::logistic_regression,
                   Algorithm::knn, Algorithm::decision_tree, Algorithm::random_forest, Algorithm::gradient_boosting}) {
        if (text == to_string(a)) return a;
    }
    fail(ErrorKind::config, "unknown algorithm '" + text + "'");
}

const std::map<std::string, ParamRange>& param_ranges(Algorithm a) {
    static const std::map<std::string, ParamRange> none;
    static const std::map<std::string, ParamRange> ridge{{"lambda", {1.0, 0.0, 1e12, false}}};
    static const std::map<std::string, ParamRange> lasso{{"lambda", {0.01, 0.0, 1e6, false}}};
    static const std::map<std::string, ParamRange> logistic{{"lambda", {1e-3, 0.0, 1e6, false}}};
    static const std::map<std::string, ParamRange> knn{{"k", {5, 1, 10000, true}}};
    static const std::map<std::string, ParamRange> tree{{"max_depth", {6, 1, 32, true}},
                                                        {"min_samples_leaf", {1, 1, 1e6, true}}};
    static const std::map<std::string, ParamRange> forest{{"n_trees", {100, 1, 2000, true}},
                                                          {"max_depth", {8, 1, 32, true}},
                                                          {"min_samples_leaf", {1, 1, 1e6, true}},
                                                          {"max_features", {0.0, 0.0, 1.0, false}},
                                                          {"bootstrap", {1, 0, 1, true}}};
    static const std::map<std::string, ParamRange> boosting{{"rounds", {100, 1, 5000, true}},
                                                            {"max_depth", {3, 1, 16, true}},
                                                            {"learning_rate", {0.1, 1e-4, 1.0, false}},
                                                            {"min_samples_leaf", {1, 1, 1e6, true}}};
    switch (a) {
        case Algorithm::linear_regression: return none;
        case Algorithm::ridge: return ridge;
        case Algorithm::lasso: return lasso;
        case Algorithm::logistic_regression: return logistic;
        case Algorithm::knn: return knn;
        case Algorithm::decision_tree: return tree;
        case Algorithm::random_forest: return forest;
        case Algorithm::gradient_boosting: return boosting;
    }
    return none;
}

bool supports(Algorithm a, Task t) noexcept {
    switch (a) {
        case Algorithm::linear_regression:
        case Algorithm::ridge:
        case Algorithm::lasso: return t == Task::regression;
        case Algorithm::logistic_regression: return t == Task::classification;
        default: return true;
    }
}

double ModelSpec::param(const std::string& name) const {
    const auto& ranges = param_ranges(algorithm);
    const auto r = ranges.find(name);
    if (r == ranges.end()) fail(ErrorKind::config, std::string(to_string(algorithm)) + " has no hyperparameter '" + name + "'");
    const auto it = params.find(name);
    return it == params.end() ? r->second.default_value : it->second;
}

namespace {

std::string format_number(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::string ModelSpec::label() const {
    std::string out = to_string(algorithm);
    out += '(';
    bool first = true;
    for (const auto& [k, v] : params) {
        if (!first) out += ',';
        first = false;
        out += k + "=" + format_number(v);
    }
    return out + ')';
}

void validate(const ModelSpec& spec) {
    if (!supports(spec.algorithm, spec.task)) {
        fail(ErrorKind::config, std::string(to_string(spec.algorithm)) + " does not support " + to_string(spec.task));
    }
    const auto& ranges = param_ranges(spec.algorithm);
    for (const auto& [k, v] : spec.params) {
        const auto r = ranges.find(k);
        if (r == ranges.end()) fail(ErrorKind::config, std::string(to_string(spec.algorithm)) + " has no hyperparameter '" + k + "'");
        if (!std::isfinite(v) || v < r->second.min || v > r->second.max) {
            fail(ErrorKind::config, "hyperparameter " + k + "=" + format_number(v) + " outside [" +
                                        format_number(r->second.min) + ", " + format_number(r->second.max) + "]");
        }
        if (r->second.integer && v != std::floor(v)) fail(ErrorKind::config, "hyperparameter " + k + " must be an integer");
    }
}

json to_json(const ModelSpec& spec) {
    return {{"algorithm", to_string(spec.algorithm)}, {"task", to_string(spec.task)}, {"params", spec.params},
            {"seed", spec.seed}};
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec s;
    try {
        s.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
        s.task = parse_task(j.at("task").get<std::string>());
        if (j.contains("params")) s.params = j.at("params").get<std::map<std::string, double>>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        fail(ErrorKind::config, std::string("malformed model spec: ") + e.what());
    }
    validate(s);
    return s;
}

Matrix TrainedModel::predict_proba(const Matrix&) const {
    fail(ErrorKind::domain, name() + " does not produce class probabilities");
}

json TrainedModel::to_json() const {
    return {{"spec", model::to_json(spec_)}, {"name", name()}, {"classes", classes_}, {"importances", importances_},
            {"notes", notes_}, {"state", state_json()}};
}

namespace {

// ---------------------------------------------------------------- helpers

struct Standardizer {
    std::vector<double> mean, scale;
    std::vector<bool> active;  // false for constant columns

    static Standardizer fit(const Matrix& x) {
        Standardizer s;
        const std::size_t n = x.rows(), d = x.cols();
        s.mean.assign(d, 0.0);
        s.scale.assign(d, 1.0);
        s.active.assign(d, false);
        for (std::size_t j = 0; j < d; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += x(i, j);
            m /= static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t i = 0; i < n; ++i) ss += (x(i, j) - m) * (x(i, j) - m);
            const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
            s.mean[j] = m;
            if (sd > 1e-12 * std::max(1.0, std::fabs(m))) {
                s.scale[j] = sd;
                s.active[j] = true;
            }
        }
        return s;
    }

    Matrix apply(const Matrix& x) const {
        Matrix z(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t j = 0; j < x.cols(); ++j) z(i, j) = active[j] ? (x(i, j) - mean[j]) / scale[j] : 0.0;
        }
        return z;
    }

    json to_json() const { return {{"mean", mean}, {"scale", scale}, {"active", active}}; }
    static Standardizer from_json(const json& j) {
        Standardizer s;
        s.mean = j.at("mean").get<std::vector<double>>();
        s.scale = j.at("scale").get<std::vector<double>>();
        s.active = j.at("active").get<std::vector<bool>>();
        return s;
    }
};

void normalize(std::vector<double>& v) {
    double total = 0.0;
    for (double& x : v) {
        x = std::fabs(x);
        total += x;
    }
    if (total > 0.0) {
        for (double& x : v) x /= total;
    }
}

/// Maps classification targets to indices into the sorted distinct labels.
std::vector<int> encode_labels(std::span<const double> y, std::vector<double>& classes) {
    classes.assign(y.begin(), y.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    std::vector<int> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        out[i] = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), y[i]) - classes.begin());
    }
    return out;
}

std::vector<double> argmax_labels(const Matrix& proba, const std::vector<double>& classes) {
    std::vector<double> out(proba.rows());
    for (std::size_t i = 0; i < proba.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < proba.cols(); ++c) {
            if (proba(i, c) > proba(i, best)) best = c;
        }
        out[i] = classes[best];
    }
    return out;
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_training_data(const Matrix& x, std::span<const double> y) {
    if (x.rows() == 0) fail(ErrorKind::domain, "cannot train on zero rows");
    if (y.size() != x.rows()) fail(ErrorKind::domain, "target length does not match feature rows");
    for (double v : x.data()) {
        if (!std::isfinite(v)) fail(ErrorKind::domain, "feature matrix contains non-finite values");
    }
    for (double v : y) {
        if (!std::isfinite(v)) fail(ErrorKind::domain, "target contains non-finite values");
    }
}

// ---------------------------------------------------------------- linear family

class LinearModel final : public TrainedModel {
public:
    LinearModel(ModelSpec spec, const Matrix& x, std::span<const double> y) : TrainedModel(std::move(spec)) {
        const std::size_t n = x.rows(), d = x.cols();
        const Standardizer st = Standardizer::fit(x);
        const Matrix z = st.apply(x);
        const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
        std::vector<double> yc(n);
        for (std::size_t i = 0; i < n; ++i) yc[i] = y[i] - ybar;
        std::vector<double> beta(d, 0.0);
        if (spec_.algorithm == Algorithm::lasso) {
            beta = lasso(z, yc, spec_.param("lambda"), st.active);
        } else {
            double lambda = spec_.algorithm == Algorithm::ridge ? spec_.param("lambda") : 0.0;
            std::vector<std::size_t> idx;
            for (std::size_t j = 0; j < d; ++j) {
                if (st.active[j]) idx.push_back(j);
            }
            if (!idx.empty()) {
                const Matrix za = z.select_cols(idx);
                Matrix gram = multiply(transpose(za), za);
                const std::vector<double> rhs = multiply(transpose(za), yc);
                if (spec_.algorithm == Algorithm::linear_regression) {
                    const auto eig = symmetric_eigen(gram);
                    if (eig.values.back() <= 1e-10 * std::max(eig.values.front(), 1e-300)) {
                        lambda = 1e-8;
                        notes_.push_back("singular design: ridge fallback lambda=1e-8");
                    }
                }
                for (std::size_t j = 0; j < idx.size(); ++j) gram(j, j) += lambda;
                std::vector<double> b;
                try {
                    b = cholesky_solve(gram, rhs);
                } catch (const Error&) {
                    for (std::size_t j = 0; j < idx.size(); ++j) gram(j, j) += 1e-8;
                    notes_.push_back("singular design: ridge fallback lambda=1e-8");
                    b = cholesky_solve(gram, rhs);
                }
                for (std::size_t j = 0; j < idx.size(); ++j) beta[idx[j]] = b[j];
            }
        }
        coef_.assign(d, 0.0);
        intercept_ = ybar;
        importances_ = beta;
        for (std::size_t j = 0; j < d; ++j) {
            if (!st.active[j]) continue;
            coef_[j] = beta[j] / st.scale[j];
            intercept_ -= coef_[j] * st.mean[j];
        }
        normalize(importances_);
    }

    LinearModel(ModelSpec spec, const json& state) : TrainedModel(std::move(spec)) {
        coef_ = state.at("coefficients").get<std::vector<double>>();
        intercept_ = state.at("intercept").get<double>();
    }

    std::vector<double> predict(const Matrix& x) const override {
        std::vector<double> out(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = intercept_ + dot(x.row(i), coef_);
        return out;
    }

    const std::vector<double>& coefficients() const { return coef_; }
    double intercept() const { return intercept_; }

protected:
    json state_json() const override { return {{"coefficients", coef_}, {"intercept", intercept_}}; }

private:
    static std::vector<double> lasso(const Matrix& z, const std::vector<double>& y, double lambda,
                                     const std::vector<bool>& active) {
        const std::size_t n = z.rows(), d = z.cols();
        const double dn = static_cast<double>(n);
        std::vector<double> beta(d, 0.0), r = y, norm(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t i = 0; i < n; ++i) norm[j] += z(i, j) * z(i, j);
            norm[j] /= dn;
        }
        for (int it = 0; it < 10000; ++it) {
            double max_delta = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                if (!active[j] || norm[j] == 0.0) continue;
                double rho = 0.0;
                for (std::size_t i = 0; i < n; ++i) rho += z(i, j) * r[i];
                rho = rho / dn + norm[j] * beta[j];
                const double soft = rho > lambda ? rho - lambda : (rho < -lambda ? rho + lambda : 0.0);
                const double next = soft / norm[j];
                const double delta = next - beta[j];
                if (delta != 0.0) {
                    for (std::size_t i = 0; i < n; ++i) r[i] -= delta * z(i, j);
                    beta[j] = next;
                }
                max_delta = std::max(max_delta, std::fabs(delta));
            }
            if (max_delta < 1e-7) break;
        }
        return beta;
    }

    std::vector<double> coef_;
    double intercept_ = 0.0;
};

class LogisticModel final : public TrainedModel {
public:
    LogisticModel(ModelSpec spec, const Matrix& x, std::span<const double> y) : TrainedModel(std::move(spec)) {
        const auto labels = encode_labels(y, classes_);
        if (classes_.size() > 2) fail(ErrorKind::domain, "logistic_regression supports binary targets only");
        const std::size_t n = x.rows(), d = x.cols();
        coef_.assign(d, 0.0);
        importances_.assign(d, 0.0);
        if (classes_.size() < 2) {
            intercept_ = 40.0;  // single class: always that class
            return;
        }
        const Standardizer st = Standardizer::fit(x);
        const Matrix z = st.apply(x);
        const double lambda = spec_.param("lambda");
        const double dn = static_cast<double>(n);
        std::vector<double> beta(d + 1, 0.0);  // beta[d] is the intercept
        double pbar = 0.0;
        for (int l : labels) pbar += l;
        pbar /= dn;
        beta[d] = std::log(pbar / (1.0 - pbar));
        int iterations = 0;
        for (; iterations < 100; ++iterations) {
            Matrix h(d + 1, d + 1);
            std::vector<double> g(d + 1, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                double eta = beta[d];
                const auto zi = z.row(i);
                for (std::size_t j = 0; j < d; ++j) eta += zi[j] * beta[j];
                const double p = std::clamp(sigmoid(eta), 1e-15, 1.0 - 1e-15);
                const double w = p * (1.0 - p);
                const double resid = p - labels[i];
                for (std::size_t a = 0; a <= d; ++a) {
                    const double za = a == d ? 1.0 : zi[a];
                    if (za == 0.0) continue;
                    g[a] += za * resid;
                    for (std::size_t b = a; b <= d; ++b) {
                        const double zb = b == d ? 1.0 : zi[b];
                        h(a, b) += w * za * zb;
                    }
                }
            }
            for (std::size_t a = 0; a <= d; ++a) {
                g[a] /= dn;
                for (std::size_t b = a; b <= d; ++b) {
                    h(a, b) /= dn;
                    h(b, a) = h(a, b);
                }
            }
            for (std::size_t j = 0; j < d; ++j) {
                if (!st.active[j]) {
                    h(j, j) = 1.0;
                    g[j] = 0.0;
                    for (std::size_t b = 0; b <= d; ++b) {
                        if (b != j) h(j, b) = h(b, j) = 0.0;
                    }
                    continue;
                }
                g[j] += lambda * beta[j];
                h(j, j) += lambda;
            }
            std::vector<double> step;
            try {
                step = solve_linear(h, g);
            } catch (const Error&) {
                notes_.push_back("IRLS stopped early: singular Hessian");
                break;
            }
            double max_step = 0.0;
            for (std::size_t a = 0; a <= d; ++a) {
                beta[a] -= step[a];
                max_step = std::max(max_step, std::fabs(step[a]));
            }
            if (max_step < 1e-10) break;
        }
        if (iterations == 100) notes_.push_back("IRLS reached 100 iterations");
        intercept_ = beta[d];
        for (std::size_t j = 0; j < d; ++j) {
            if (!st.active[j]) continue;
            coef_[j] = beta[j] / st.scale[j];
            intercept_ -= coef_[j] * st.mean[j];
            importances_[j] = beta[j];
        }
        normalize(importances_);
    }

    LogisticModel(ModelSpec spec, const json& state) : TrainedModel(std::move(spec)) {
        coef_ = state.at("coefficients").get<std::vector<double>>();
        intercept_ = state.at("intercept").get<double>();
    }

    Matrix predict_proba(const Matrix& x) const override {
        Matrix out(x.rows(), classes_.size());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            if (classes_.size() == 1) {
                out(i, 0) = 1.0;
                continue;
            }
            const double p = sigmoid(intercept_ + dot(x.row(i), coef_));
            out(i, 0) = 1.0 - p;
            out(i, 1) = p;
        }
        return out;
    }

    std::vector<double> predict(const Matrix& x) const override { return argmax_labels(predict_proba(x), classes_); }

protected:
    json state_json() const override { return {{"coefficients", coef_}, {"intercept", intercept_}}; }

private:
    std::vector<double> coef_;
    double intercept_ = 0.0;
};

// ---------------------------------------------------------------- k nearest neighbours

class KnnModel final : public TrainedModel {
public:
    KnnModel(ModelSpec spec, const Matrix& x, std::span<const double> y) : TrainedModel(std::move(spec)) {
        st_ = Standardizer::fit(x);
        train_ = st_.apply(x);
        y_.assign(y.begin(), y.end());
        if (task() == Task::classification) labels_ = encode_labels(y, classes_);
        importances_.assign(x.cols(), x.cols() ? 1.0 / static_cast<double>(x.cols()) : 0.0);
    }

    KnnModel(ModelSpec spec, const json& state) : TrainedModel(std::move(spec)) {
        st_ = Standardizer::from_json(state.at("standardizer"));
        const auto rows = state.at("train").get<std::vector<std::vector<double>>>();
        train_ = rows.empty() ? Matrix(0, st_.mean.size()) : Matrix::from_rows(rows);
        y_ = state.at("y").get<std::vector<double>>();
        if (task() == Task::classification) labels_ = encode_labels(y_, classes_);
    }

    Matrix predict_proba(const Matrix& x) const override {
        if (task() != Task::classification) TrainedModel::predict_proba(x);
        Matrix out(x.rows(), classes_.size());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const auto nn = neighbours(x.row(i));
            for (std::size_t r : nn) out(i, static_cast<std::size_t>(labels_[r])) += 1.0 / static_cast<double>(nn.size());
        }
        return out;
    }

    std::vector<double> predict(const Matrix& x) const override {
        if (task() == Task::classification) return argmax_labels(predict_proba(x), classes_);
        std::vector<double> out(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const auto nn = neighbours(x.row(i));
            double s = 0.0;
            for (std::size_t r : nn) s += y_[r];
            out[i] = s / static_cast<double>(nn.size());
        }
        return out;
    }

protected:
    json state_json() const override {
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < train_.rows(); ++i) rows.emplace_back(train_.row(i).begin(), train_.row(i).end());
        return {{"standardizer", st_.to_json()}, {"train", rows}, {"y", y_}};
    }

private:
    std::vector<std::size_t> neighbours(std::span<const double> raw) const {
        std::vector<double> q(raw.size());
        for (std::size_t j = 0; j < raw.size(); ++j) q[j] = st_.active[j] ? (raw[j] - st_.mean[j]) / st_.scale[j] : 0.0;
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(spec_.param("k")), train_.rows());
        std::vector<std::pair<double, std::size_t>> d(train_.rows());
        for (std::size_t r = 0; r < train_.rows(); ++r) d[r] = {squared_distance(train_.row(r), q), r};
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
        std::vector<std::size_t> out(k);
        for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
        return out;
    }

    Standardizer st_;
    Matrix train_;
    std::vector<double> y_;
    std::vector<int> labels_;
};

// ---------------------------------------------------------------- trees

TreeParams tree_params(const ModelSpec& spec, std::size_t d) {
    TreeParams p;
    p.max_depth = static_cast<int>(spec.param("max_depth"));
    p.min_samples_leaf = static_cast<std::size_t>(spec.param("min_samples_leaf"));
    if (spec.algorithm == Algorithm::random_forest) {
        const double f = spec.param("max_features");
        if (f == 0.0) {
            p.max_features = spec.task == Task::classification
                                 ? static_cast<std::size_t>(std::max(1.0, std::round(std::sqrt(static_cast<double>(d)))))
                                 : std::max<std::size_t>(1, d / 3);
        } else {
            p.max_features = static_cast<std::size_t>(std::max(1.0, std::round(f * static_cast<double>(d))));
        }
    }
    return p;
}

class ForestModel final : public TrainedModel {
public:
    // decision_tree is the one-tree, all-features, no-bootstrap case
    ForestModel(ModelSpec spec, const Matrix& x, std::span<const double> y, unsigned threads)
        : TrainedModel(std::move(spec)) {
        const bool forest = spec_.algorithm == Algorithm::random_forest;
        const std::size_t n_trees = forest ? static_cast<std::size_t>(spec_.param("n_trees")) : 1;
        const bool bootstrap = forest && spec_.param("bootstrap") != 0.0;
        const TreeParams params = tree_params(spec_, x.cols());
        std::vector<int> labels;
        if (task() == Task::classification) labels = encode_labels(y, classes_);
        trees_.resize(n_trees);
        parallel_for(n_trees, threads, [&](std::size_t t) {
            const std::uint64_t seed = derive_seed(spec_.seed, static_cast<std::uint64_t>(t));
            Rng rng(derive_seed(seed, "bootstrap"));
            std::vector<std::size_t> rows(x.rows());
            if (bootstrap) {
                for (auto& r : rows) r = rng.index(x.rows());
            } else {
                std::iota(rows.begin(), rows.end(), 0);
            }
            trees_[t] = task() == Task::classification
                            ? DecisionTree::fit_classifier(x, labels, classes_.size(), rows, params, seed)
                            : DecisionTree::fit_regressor(x, y, rows, params, seed);
        });
        importances_.assign(x.cols(), 0.0);
        for (const auto& t : trees_) {
            auto imp = t.importances();
            normalize(imp);
            for (std::size_t j = 0; j < imp.size(); ++j) importances_[j] += imp[j];
        }
        normalize(importances_);
    }

    ForestModel(ModelSpec spec, const json& state) : TrainedModel(std::move(spec)) {
        for (const auto& t : state.at("trees")) trees_.push_back(DecisionTree::from_json(t));
    }

    Matrix predict_proba(const Matrix& x) const override {
        if (task() != Task::classification) TrainedModel::predict_proba(x);
        Matrix out(x.rows(), classes_.size());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (const auto& t : trees_) {
                const auto& v = t.predict(x.row(i));
                for (std::size_t c = 0; c < v.size(); ++c) out(i, c) += v[c];
            }
            for (std::size_t c = 0; c < classes_.size(); ++c) out(i, c) /= static_cast<double>(trees_.size());
        }
        return out;
    }

    std::vector<double> predict(const Matrix& x) const override {
        if (task() == Task::classification) return argmax_labels(predict_proba(x), classes_);
        std::vector<double> out(x.rows(), 0.0);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (const auto& t : trees_) out[i] += t.predict(x.row(i))[0];
            out[i] /= static_cast<double>(trees_.size());
        }
        return out;
    }

protected:
    json state_json() const override {
        json trees = json::array();
        for (const auto& t : trees_) trees.push_back(t.to_json());
        return {{"trees", trees}};
    }

private:
    std::vector<DecisionTree> trees_;
};

class BoostingModel final : public TrainedModel {
public:
    BoostingModel(ModelSpec spec, const Matrix& x, std::span<const double> y) : TrainedModel(std::move(spec)) {
        const std::size_t n = x.rows();
        const int rounds = static_cast<int>(spec_.param("rounds"));
        lr_ = spec_.param("learning_rate");
        TreeParams params;
        params.max_depth = static_cast<int>(spec_.param("max_depth"));
        params.min_samples_leaf = static_cast<std::size_t>(spec_.param("min_samples_leaf"));
        std::vector<double> target(y.begin(), y.end());
        const bool classify = task() == Task::classification;
        if (classify) {
            const auto labels = encode_labels(y, classes_);
            if (classes_.size() > 2) fail(ErrorKind::domain, "gradient_boosting supports binary targets only");
            for (std::size_t i = 0; i < n; ++i) target[i] = labels[i];
            double pbar = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(n);
            pbar = std::clamp(pbar, 1e-6, 1.0 - 1e-6);
            init_ = std::log(pbar / (1.0 - pbar));
        } else {
            init_ = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(n);
        }
        std::vector<double> f(n, init_), resid(n);
        std::vector<std::size_t> rows(n);
        std::iota(rows.begin(), rows.end(), 0);
        for (int m = 0; m < rounds; ++m) {
            for (std::size_t i = 0; i < n; ++i) resid[i] = target[i] - (classify ? sigmoid(f[i]) : f[i]);
            DecisionTree tree = DecisionTree::fit_regressor(x, resid, rows, params, derive_seed(spec_.seed, static_cast<std::uint64_t>(m)));
            if (classify) {
                // Newton step per leaf: sum of gradients over sum of hessians
                std::vector<double> num(tree.nodes().size(), 0.0), den(tree.nodes().size(), 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t leaf = tree.leaf_index(x.row(i));
                    const double p = sigmoid(f[i]);
                    num[leaf] += resid[i];
                    den[leaf] += p * (1.0 - p);
                }
                for (std::size_t l = 0; l < tree.nodes().size(); ++l) {
                    if (tree.nodes()[l].feature >= 0) continue;
                    tree.set_leaf_value(l, {den[l] > 1e-12 ? std::clamp(num[l] / den[l], -20.0, 20.0) : 0.0});
                }
            }
            for (std::size_t i = 0; i < n; ++i) f[i] += lr_ * tree.predict(x.row(i))[0];
            trees_.push_back(std::move(tree));
        }
        importances_.assign(x.cols(), 0.0);
        for (const auto& t : trees_) {
            for (std::size_t j = 0; j < x.cols(); ++j) importances_[j] += t.importances()[j];
        }
        normalize(importances_);
    }

    BoostingModel(ModelSpec spec, const json& state) : TrainedModel(std::move(spec)) {
        init_ = state.at("init").get<double>();
        lr_ = state.at("learning_rate").get<double>();
        for (const auto& t : state.at("trees")) trees_.push_back(DecisionTree::from_json(t));
    }

    std::vector<double> raw(const Matrix& x) const {
        std::vector<double> out(x.rows(), init_);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (const auto& t : trees_) out[i] += lr_ * t.predict(x.row(i))[0];
        }
        return out;
    }

    Matrix predict_proba(const Matrix& x) const override {
        if (task() != Task::classification) TrainedModel::predict_proba(x);
        const auto f = raw(x);
        Matrix out(x.rows(), classes_.size());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            if (classes_.size() == 1) {
                out(i, 0) = 1.0;
                continue;
            }
            out(i, 1) = sigmoid(f[i]);
            out(i, 0) = 1.0 - out(i, 1);
        }
        return out;
    }

    std::vector<double> predict(const Matrix& x) const override {
        if (task() == Task::classification) return argmax_labels(predict_proba(x), classes_);
        return raw(x);
    }

protected:
    json state_json() const override {
        json trees = json::array();
        for (const auto& t : trees_) trees.push_back(t.to_json());
        return {{"init", init_}, {"learning_rate", lr_}, {"trees", trees}};
    }

private:
    double init_ = 0.0;
    double lr_ = 0.1;
    std::vector<DecisionTree> trees_;
};

// ---------------------------------------------------------------- ensembles

void check_members(const std::vector<ModelPtr>& members) {
    if (members.size() < 2) fail(ErrorKind::domain, "an ensemble needs at least 2 base models");
    for (const auto& m : members) {
        if (!m) fail(ErrorKind::domain, "null ensemble member");
        if (m->task() != members.front()->task()) fail(ErrorKind::domain, "ensemble members mix classification and regression");
        if (m->task() == Task::classification && m->classes() != members.front()->classes()) {
            fail(ErrorKind::domain, "ensemble members were trained on different class labels");
        }
    }
}

class VotingModel final : public TrainedModel {
public:
    explicit VotingModel(std::vector<ModelPtr> members) : TrainedModel(members.front()->spec()), members_(std::move(members)) {
        classes_ = members_.front()->classes();
        average_importances();
    }

    std::string name() const override {
        std::string n = "voting[";
        for (std::size_t i = 0; i < members_.size(); ++i) n += (i ? "," : "") + members_[i]->name();
        return n + "]";
    }

    Matrix predict_proba(const Matrix& x) const override {
        if (task() != Task::classification) TrainedModel::predict_proba(x);
        Matrix out(x.rows(), classes_.size());
        for (const auto& m : members_) {
            const Matrix p = m->predict_proba(x);
            for (std::size_t i = 0; i < out.rows(); ++i) {
                for (std::size_t c = 0; c < out.cols(); ++c) out(i, c) += p(i, c) / static_cast<double>(members_.size());
            }
        }
        return out;
    }

    std::vector<double> predict(const Matrix& x) const override {
        std::vector<double> out(x.rows(), 0.0);
        if (task() == Task::regression) {
            for (const auto& m : members_) {
                const auto p = m->predict(x);
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += p[i] / static_cast<double>(members_.size());
            }
            return out;
        }
        // majority of predicted labels; ties go to the higher mean probability
        Matrix votes(x.rows(), classes_.size());
        for (const auto& m : members_) {
            const auto p = m->predict(x);
            for (std::size_t i = 0; i < out.size(); ++i) {
                const auto c = static_cast<std::size_t>(std::lower_bound(classes_.begin(), classes_.end(), p[i]) - classes_.begin());
                votes(i, c) += 1.0;
            }
        }
        const Matrix proba = predict_proba(x);
        for (std::size_t i = 0; i < out.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < classes_.size(); ++c) {
                if (votes(i, c) > votes(i, best) || (votes(i, c) == votes(i, best) && proba(i, c) > proba(i, best))) best = c;
            }
            out[i] = classes_[best];
        }
        return out;
    }

    const std::vector<ModelPtr>& members() const { return members_; }

protected:
    json state_json() const override {
        json m = json::array();
        for (const auto& member : members_) m.push_back(member->to_json());
        return {{"kind", "voting"}, {"members", m}};
    }

private:
    void average_importances() {
        importances_.assign(members_.front()->feature_importances().size(), 0.0);
        for (const auto& m : members_) {
            const auto& imp = m->feature_importances();
            for (std::size_t j = 0; j < std::min(imp.size(), importances_.size()); ++j) importances_[j] += imp[j];
        }
        normalize(importances_);
    }

    std::vector<ModelPtr> members_;
};

class StackingModel final : public TrainedModel {
public:
    StackingModel(std::vector<ModelPtr> members, ModelPtr meta)
        : TrainedModel(members.front()->spec()), members_(std::move(members)), meta_(std::move(meta)) {
        classes_ = members_.front()->classes();
        if (task() == Task::classification && classes_.size() > 2) fail(ErrorKind::domain, "stacking supports binary classification only");
        if (meta_->task() != task()) fail(ErrorKind::domain, "stacking meta model has a different task");
        importances_.assign(members_.front()->feature_importances().size(), 0.0);
        for (const auto& m : members_) {
            const auto& imp = m->feature_importances();
            for (std::size_t j = 0; j < std::min(imp.size(), importances_.size()); ++j) importances_[j] += imp[j];
        }
        normalize(importances_);
    }

    std::string name() const override {
        std::string n = "stacking[";
        for (std::size_t i = 0; i < members_.size(); ++i) n += (i ? "," : "") + members_[i]->name();
        return n + "]->" + meta_->name();
    }

    Matrix predict_proba(const Matrix& x) const override { return meta_->predict_proba(meta_features(members_, x)); }
    std::vector<double> predict(const Matrix& x) const override { return meta_->predict(meta_features(members_, x)); }

protected:
    json state_json() const override {
        json m = json::array();
        for (const auto& member : members_) m.push_back(member->to_json());
        return {{"kind", "stacking"}, {"members", m}, {"meta", meta_->to_json()}};
    }

private:
    std::vector<ModelPtr> members_;
    ModelPtr meta_;
};

}  // namespace

Matrix meta_features(const std::vector<ModelPtr>& members, const Matrix& x) {
    Matrix out(x.rows(), members.size());
    for (std::size_t m = 0; m < members.size(); ++m) {
        std::vector<double> col;
        if (members[m]->task() == Task::classification) {
            const Matrix p = members[m]->predict_proba(x);
            col.resize(x.rows());
            for (std::size_t i = 0; i < x.rows(); ++i) col[i] = p.cols() > 1 ? p(i, p.cols() - 1) : 0.0;
        } else {
            col = members[m]->predict(x);
        }
        for (std::size_t i = 0; i < x.rows(); ++i) out(i, m) = col[i];
    }
    return out;
}

ModelPtr make_voting(std::vector<ModelPtr> members) {
    check_members(members);
    return std::make_shared<VotingModel>(std::move(members));
}

ModelPtr make_stacking(std::vector<ModelPtr> members, ModelPtr meta) {
    check_members(members);
    if (!meta) fail(ErrorKind::domain, "stacking needs a meta model");
    return std::make_shared<StackingModel>(std::move(members), std::move(meta));
}

ModelPtr train(const ModelSpec& spec, const Matrix& x, std::span<const double> y, const TrainOptions& options) {
    validate(spec);
    check_training_data(x, y);
    switch (spec.algorithm) {
        case Algorithm::linear_regression:
        case Algorithm::ridge:
        case Algorithm::lasso: return std::make_shared<LinearModel>(spec, x, y);
        case Algorithm::logistic_regression: return std::make_shared<LogisticModel>(spec, x, y);
        case Algorithm::knn: return std::make_shared<KnnModel>(spec, x, y);
        case Algorithm::decision_tree:
        case Algorithm::random_forest: return std::make_shared<ForestModel>(spec, x, y, options.threads);
        case Algorithm::gradient_boosting: return std::make_shared<BoostingModel>(spec, x, y);
    }
    fail(ErrorKind::config, "unknown algorithm");
}

ModelPtr model_from_json(const json& j) {
    try {
        const json& state = j.at("state");
        std::shared_ptr<TrainedModel> m;
        if (state.contains("kind")) {
            std::vector<ModelPtr> members;
            for (const auto& mj : state.at("members")) members.push_back(model_from_json(mj));
            const std::string kind = state.at("kind").get<std::string>();
            if (kind == "voting") return make_voting(std::move(members));
            if (kind == "stacking") return make_stacking(std::move(members), model_from_json(state.at("meta")));
            fail(ErrorKind::data, "unknown ensemble kind '" + kind + "'");
        }
        const ModelSpec spec = spec_from_json(j.at("spec"));
        switch (spec.algorithm) {
            case Algorithm::linear_regression:
            case Algorithm::ridge:
            case Algorithm::lasso: m = std::make_shared<LinearModel>(spec, state); break;
            case Algorithm::logistic_regression: m = std::make_shared<LogisticModel>(spec, state); break;
            case Algorithm::knn: m = std::make_shared<KnnModel>(spec, state); break;
            case Algorithm::decision_tree:
            case Algorithm::random_forest: m = std::make_shared<ForestModel>(spec, state); break;
            case Algorithm::gradient_boosting: m = std::make_shared<BoostingModel>(spec, state); break;
        }
        m->classes_ = j.at("classes").get<std::vector<double>>();
        m->importances_ = j.at("importances").get<std::vector<double>>();
        m->notes_ = j.at("notes").get<std::vector<std::string>>();
        return m;
    } catch (const json::exception& e) {
        fail(ErrorKind::data, std::string("malformed model JSON: ") + e.what());
    }
}

}  // namespace autods::model
