#include "autods/stats/multivariate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

#include "autods/error.hpp"
#include "autods/parallel.hpp"
#include "autods/rng.hpp"
#include "autods/stats/distributions.hpp"
#include "autods/stats/inference.hpp"
#include "autods/table.hpp"

namespace autods::stats {

std::vector<bool> outliers_zscore(std::span<const double> x, double threshold) {
    std::vector<bool> mask(x.size(), false);
    if (x.size() < 2) return mask;
    const double m = mean(x);
    const double sd = std::sqrt(variance(x));
    if (sd == 0.0) return mask;
    for (std::size_t i = 0; i < x.size(); ++i) mask[i] = std::fabs(x[i] - m) / sd > threshold;
    return mask;
}

Bounds zscore_bounds(std::span<const double> x, double threshold) {
    if (x.size() < 2) fail(ErrorKind::domain, "z-score bounds need at least 2 values");
    const double m = mean(x);
    const double sd = std::sqrt(variance(x));
    return {m - threshold * sd, m + threshold * sd};
}

Bounds iqr_bounds(std::span<const double> x, double k) {
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double q1 = quantile_sorted(s, 0.25);
    const double q3 = quantile_sorted(s, 0.75);
    const double iqr = q3 - q1;
    return {q1 - k * iqr, q3 + k * iqr};
}

std::vector<bool> outliers_iqr(std::span<const double> x, double k) {
    std::vector<bool> mask(x.size(), false);
    if (x.empty()) return mask;
    const Bounds b = iqr_bounds(x, k);
    for (std::size_t i = 0; i < x.size(); ++i) mask[i] = x[i] < b.lower || x[i] > b.upper;
    return mask;
}

std::vector<double> mahalanobis_squared(const Matrix& points) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    if (n < 2 || d == 0) fail(ErrorKind::domain, "Mahalanobis distance needs at least 2 rows and 1 column");
    std::vector<double> mu;
    Matrix cov = covariance(points, mu);
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += cov(i, i);
    const double ridge = trace > 0.0 ? 1e-6 * trace / static_cast<double>(d) : 1e-12;
    for (std::size_t i = 0; i < d; ++i) cov(i, i) += ridge;
    const Matrix inv = inverse(cov);
    std::vector<double> out(n);
    std::vector<double> diff(d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < d; ++j) diff[j] = points(r, j) - mu[j];
        const auto w = multiply(inv, diff);
        out[r] = std::max(0.0, dot(diff, w));
    }
    return out;
}

std::vector<bool> outliers_mahalanobis(const Matrix& points, double probability) {
    const auto d2 = mahalanobis_squared(points);
    const double cutoff = chi_square_quantile(probability, static_cast<double>(points.cols()));
    std::vector<bool> mask(d2.size());
    for (std::size_t i = 0; i < d2.size(); ++i) mask[i] = d2[i] > cutoff;
    return mask;
}

// ---------------------------------------------------------------------------
// k-means

std::size_t ClusterModel::predict(std::span<const double> point) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(centroids.row(c), point);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

ClusterModel kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, int max_iterations, double tolerance) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    if (k < 2) fail(ErrorKind::domain, "kmeans needs k >= 2");
    if (k > n) fail(ErrorKind::domain, "kmeans needs k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    Rng rng(seed);
    ClusterModel model;
    model.k = k;
    model.centroids = Matrix(k, d);

    // k-means++ seeding
    std::vector<std::size_t> chosen;
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    chosen.push_back(rng.index(n));
    while (chosen.size() < k) {
        const auto last = points.row(chosen.back());
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(points.row(i), last));
            total += nearest[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += nearest[i];
                if (nearest[i] > 0.0 && acc > target) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) {
                for (std::size_t i = n; i-- > 0;) {
                    if (nearest[i] > 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
        } else {
            // all remaining points coincide with a centroid
            std::vector<std::size_t> unused;
            for (std::size_t i = 0; i < n; ++i) {
                if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) unused.push_back(i);
            }
            pick = unused[rng.index(unused.size())];
        }
        chosen.push_back(pick);
    }
    for (std::size_t c = 0; c < k; ++c) {
        const auto src = points.row(chosen[c]);
        std::copy(src.begin(), src.end(), model.centroids.row(c).begin());
    }

    model.assignments.assign(n, 0);
    for (int it = 0; it < max_iterations; ++it) {
        model.iterations = it + 1;
        for (std::size_t i = 0; i < n; ++i) model.assignments[i] = model.predict(points.row(i));
        Matrix next(k, d);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = model.assignments[i];
            ++counts[c];
            for (std::size_t j = 0; j < d; ++j) next(c, j) += points(i, j);
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // empty cluster keeps its centroid
                std::copy(model.centroids.row(c).begin(), model.centroids.row(c).end(), next.row(c).begin());
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) next(c, j) /= static_cast<double>(counts[c]);
            shift = std::max(shift, std::sqrt(squared_distance(next.row(c), model.centroids.row(c))));
        }
        model.centroids = std::move(next);
        if (shift < tolerance) break;
    }
    model.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        model.assignments[i] = model.predict(points.row(i));
        model.inertia += squared_distance(points.row(i), model.centroids.row(model.assignments[i]));
    }
    return model;
}

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    if (a.size() != b.size()) fail(ErrorKind::domain, "adjusted_rand_index needs equal-length labelings");
    const std::size_t n = a.size();
    if (n < 2) return 1.0;
    std::map<std::pair<std::size_t, std::size_t>, double> joint;
    std::map<std::size_t, double> ra, rb;
    for (std::size_t i = 0; i < n; ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ra[a[i]] += 1.0;
        rb[b[i]] += 1.0;
    }
    auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (const auto& [_, v] : joint) index += c2(v);
    for (const auto& [_, v] : ra) sa += c2(v);
    for (const auto& [_, v] : rb) sb += c2(v);
    const double expected = sa * sb / c2(static_cast<double>(n));
    const double max_index = 0.5 * (sa + sb);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

StabilityResult cluster_stability(const Matrix& points, std::size_t k, std::uint64_t seed, int resamples,
                                  double threshold) {
    const ClusterModel full = kmeans(points, k, derive_seed(seed, "full"));
    const std::size_t n = points.rows();
    StabilityResult out;
    Rng rng(derive_seed(seed, "bootstrap"));
    for (int b = 0; b < resamples; ++b) {
        std::vector<std::size_t> rows(n);
        for (auto& r : rows) r = rng.index(n);
        const Matrix sample = points.select_rows(rows);
        std::size_t distinct = 0;
        {
            std::vector<std::size_t> sorted = rows;
            std::sort(sorted.begin(), sorted.end());
            distinct = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
        }
        if (distinct < k) {
            out.aris.push_back(0.0);
            continue;
        }
        const ClusterModel fit = kmeans(sample, k, derive_seed(seed, static_cast<std::uint64_t>(b)));
        std::vector<std::size_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = fit.predict(points.row(i));
        out.aris.push_back(adjusted_rand_index(full.assignments, labels));
    }
    out.mean_ari = out.aris.empty() ? 0.0 : mean(out.aris);
    out.stable = out.mean_ari >= threshold;
    return out;
}

std::vector<double> cluster_feature_importance(const Matrix& points, std::span<const std::size_t> assignments,
                                               std::size_t k) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    if (assignments.size() != n) fail(ErrorKind::domain, "assignments do not match the number of rows");
    std::vector<double> out(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double grand = 0.0;
        std::vector<double> sums(k, 0.0), counts(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            grand += points(i, j);
            sums[assignments[i]] += points(i, j);
            counts[assignments[i]] += 1.0;
        }
        grand /= static_cast<double>(n);
        double sst = 0.0, ssb = 0.0;
        for (std::size_t i = 0; i < n; ++i) sst += (points(i, j) - grand) * (points(i, j) - grand);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0.0) continue;
            const double m = sums[c] / counts[c];
            ssb += counts[c] * (m - grand) * (m - grand);
        }
        out[j] = sst > 0.0 ? std::clamp(ssb / sst, 0.0, 1.0) : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// PCA

Matrix Projection::transform(const Matrix& points) const {
    Matrix centered = points;
    for (std::size_t r = 0; r < centered.rows(); ++r) {
        for (std::size_t j = 0; j < centered.cols(); ++j) centered(r, j) -= mean[j];
    }
    return multiply(centered, transpose(components));
}

Matrix Projection::reconstruct(const Matrix& s) const {
    Matrix out = multiply(s, components);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t j = 0; j < out.cols(); ++j) out(r, j) += mean[j];
    }
    return out;
}

Projection pca(const Matrix& points, double variance_target) {
    if (points.rows() < 2 || points.cols() < 1) fail(ErrorKind::domain, "PCA needs at least 2 rows and 1 column");
    if (!(variance_target > 0.0 && variance_target <= 1.0)) fail(ErrorKind::domain, "variance_target must lie in (0, 1]");
    Projection p;
    const Matrix cov = covariance(points, p.mean);
    const SymmetricEigen eig = symmetric_eigen(cov);
    const std::size_t d = points.cols();
    double total = 0.0;
    for (double v : eig.values) total += std::max(0.0, v);
    std::size_t keep = d;
    double cumulative = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double v = std::max(0.0, eig.values[j]);
        p.explained_variance.push_back(v);
        p.explained_variance_ratio.push_back(total > 0.0 ? v / total : 0.0);
        cumulative += p.explained_variance_ratio.back();
        if (cumulative >= variance_target - 1e-12) {
            keep = j + 1;
            break;
        }
    }
    if (total == 0.0) keep = 1;
    p.explained_variance.resize(keep, 0.0);
    p.explained_variance_ratio.resize(keep, 0.0);
    p.components = Matrix(keep, d);
    for (std::size_t c = 0; c < keep; ++c) {
        for (std::size_t j = 0; j < d; ++j) p.components(c, j) = eig.vectors(j, c);
    }
    p.scores = p.transform(points);
    return p;
}

// ---------------------------------------------------------------------------
// Isolation forest

double average_path_length(std::size_t n) {
    if (n <= 1) return 0.0;
    if (n == 2) return 1.0;
    const double m = static_cast<double>(n - 1);
    const double harmonic = std::log(m) + std::numbers::egamma;
    return 2.0 * harmonic - 2.0 * m / static_cast<double>(n);
}

IsolationForest IsolationForest::fit(const Matrix& points, std::uint64_t seed, std::size_t n_trees,
                                     std::size_t subsample, unsigned threads) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    if (n < 8) fail(ErrorKind::domain, "insufficient sample: isolation forest needs at least 8 rows");
    if (n_trees == 0) fail(ErrorKind::domain, "isolation forest needs at least 1 tree");
    IsolationForest forest;
    forest.psi_ = std::min(subsample, n);
    const int height_limit = static_cast<int>(std::ceil(std::log2(static_cast<double>(forest.psi_))));
    forest.trees_.resize(n_trees);
    parallel_for(n_trees, threads, [&](std::size_t t) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        // partial Fisher-Yates for a sample without replacement
        for (std::size_t i = 0; i < forest.psi_; ++i) std::swap(all[i], all[i + rng.index(n - i)]);
        std::vector<std::size_t> rows(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(forest.psi_));
        Tree tree;
        struct Task {
            std::size_t node, begin, end;
            int depth;
        };
        tree.push_back({});
        std::vector<Task> stack{{0, 0, rows.size(), 0}};
        while (!stack.empty()) {
            const Task task = stack.back();
            stack.pop_back();
            Node& node = tree[task.node];
            node.size = task.end - task.begin;
            if (task.depth >= height_limit || node.size <= 1) continue;
            std::vector<std::size_t> candidates;
            std::vector<double> lo(d), hi(d);
            for (std::size_t j = 0; j < d; ++j) {
                lo[j] = hi[j] = points(rows[task.begin], j);
                for (std::size_t i = task.begin + 1; i < task.end; ++i) {
                    lo[j] = std::min(lo[j], points(rows[i], j));
                    hi[j] = std::max(hi[j], points(rows[i], j));
                }
                if (hi[j] > lo[j]) candidates.push_back(j);
            }
            if (candidates.empty()) continue;
            const std::size_t feature = candidates[rng.index(candidates.size())];
            double split = rng.uniform(lo[feature], hi[feature]);
            if (split <= lo[feature]) split = std::nextafter(lo[feature], hi[feature]);
            const auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(task.begin),
                                            rows.begin() + static_cast<std::ptrdiff_t>(task.end),
                                            [&](std::size_t r) { return points(r, feature) < split; });
            const std::size_t cut = static_cast<std::size_t>(mid - rows.begin());
            const std::size_t left = tree.size();
            tree.push_back({});
            tree.push_back({});
            Node& parent = tree[task.node];
            parent.feature = static_cast<int>(feature);
            parent.split = split;
            parent.left = left;
            parent.right = left + 1;
            stack.push_back({left + 1, cut, task.end, task.depth + 1});
            stack.push_back({left, task.begin, cut, task.depth + 1});
        }
        forest.trees_[t] = std::move(tree);
    });
    return forest;
}

double IsolationForest::path_length(const Tree& tree, std::span<const double> point) const {
    std::size_t node = 0;
    double depth = 0.0;
    while (tree[node].feature >= 0) {
        const Node& n = tree[node];
        node = point[static_cast<std::size_t>(n.feature)] < n.split ? n.left : n.right;
        depth += 1.0;
    }
    return depth + average_path_length(tree[node].size);
}

double IsolationForest::score(std::span<const double> point) const {
    double total = 0.0;
    for (const auto& tree : trees_) total += path_length(tree, point);
    const double expected = total / static_cast<double>(trees_.size());
    const double c = average_path_length(psi_);
    return c > 0.0 ? std::pow(2.0, -expected / c) : 0.5;
}

std::vector<double> IsolationForest::score(const Matrix& points) const {
    std::vector<double> out(points.rows());
    for (std::size_t r = 0; r < points.rows(); ++r) out[r] = score(points.row(r));
    return out;
}

std::vector<double> isolation_forest(const Matrix& points, std::size_t n_trees, std::uint64_t seed,
                                     std::size_t subsample) {
    return IsolationForest::fit(points, seed, n_trees, subsample).score(points);
}

}  // namespace autods::stats
