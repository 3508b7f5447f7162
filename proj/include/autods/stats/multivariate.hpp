#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "autods/linalg.hpp"

namespace autods::stats {

// Outlier masks. All inputs are complete (no missing values).

/// |x - mean| / sd > threshold with the n-1 sd. A constant sample flags nothing.
std::vector<bool> outliers_zscore(std::span<const double> x, double threshold = 3.0);

struct Bounds {
    double lower = 0.0;
    double upper = 0.0;
};

/// Tukey whiskers [q1 - k IQR, q3 + k IQR].
Bounds iqr_bounds(std::span<const double> x, double k = 1.5);
/// mean +/- threshold * sd
Bounds zscore_bounds(std::span<const double> x, double threshold = 3.0);
std::vector<bool> outliers_iqr(std::span<const double> x, double k = 1.5);

/// Squared Mahalanobis distance of every row under the ridge-regularized sample covariance.
std::vector<double> mahalanobis_squared(const Matrix& points);
/// Flags rows whose squared distance exceeds the chi-square(d) quantile at `probability`.
std::vector<bool> outliers_mahalanobis(const Matrix& points, double probability = 0.975);

struct ClusterModel {
    std::size_t k = 0;
    Matrix centroids;  // k x d
    std::vector<std::size_t> assignments;
    double inertia = 0.0;
    int iterations = 0;

    std::size_t predict(std::span<const double> point) const;
};

/// k-means++ seeding followed by Lloyd iterations.
ClusterModel kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, int max_iterations = 300,
                    double tolerance = 1e-6);

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

struct StabilityResult {
    double mean_ari = 0.0;
    std::vector<double> aris;
    bool stable = false;
};

/// Refits on bootstrap resamples and compares the induced labels with the full-data fit.
StabilityResult cluster_stability(const Matrix& points, std::size_t k, std::uint64_t seed, int resamples = 10,
                                  double threshold = 0.8);

/// Per-feature between-cluster share of variance (eta squared) in [0, 1].
std::vector<double> cluster_feature_importance(const Matrix& points, std::span<const std::size_t> assignments,
                                               std::size_t k);

struct Projection {
    Matrix components;  // one orthonormal component per row
    std::vector<double> explained_variance;
    std::vector<double> explained_variance_ratio;
    Matrix scores;  // n x components
    std::vector<double> mean;

    Matrix transform(const Matrix& points) const;
    Matrix reconstruct(const Matrix& scores) const;
};

/// Keeps the fewest leading components whose cumulative ratio reaches variance_target.
Projection pca(const Matrix& points, double variance_target = 0.95);

class IsolationForest {
public:
    static IsolationForest fit(const Matrix& points, std::uint64_t seed, std::size_t n_trees = 100,
                               std::size_t subsample = 256, unsigned threads = 1);

    /// Anomaly score 2^(-E[h(x)] / c(psi)) in (0, 1).
    double score(std::span<const double> point) const;
    std::vector<double> score(const Matrix& points) const;

private:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double split = 0.0;
        std::size_t left = 0;
        std::size_t right = 0;
        std::size_t size = 0;
    };
    using Tree = std::vector<Node>;

    double path_length(const Tree& tree, std::span<const double> point) const;

    std::vector<Tree> trees_;
    std::size_t psi_ = 0;
};

std::vector<double> isolation_forest(const Matrix& points, std::size_t n_trees, std::uint64_t seed,
                                     std::size_t subsample = 256);

/// Average unsuccessful-search path length in a binary search tree of n nodes.
double average_path_length(std::size_t n);

}  // namespace autods::stats
