#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "autods/linalg.hpp"

namespace autods::model {

struct TreeParams {
    int max_depth = 6;
    std::size_t min_samples_leaf = 1;
    std::size_t min_samples_split = 2;
    /// Number of features tried at each split; 0 or >= d means all of them, in column order.
    std::size_t max_features = 0;
};

/// CART tree over a row-major feature matrix.
///
/// Classification leaves hold class probabilities; regression leaves hold one
/// value. `rows` may repeat indices (bootstrap samples).
class DecisionTree {
public:
    struct Node {
        int feature = -1;  // -1 for leaves
        double threshold = 0.0;  // x <= threshold goes left
        int left = -1;
        int right = -1;
        std::size_t samples = 0;
        std::vector<double> value;
    };

    static DecisionTree fit_classifier(const Matrix& x, std::span<const int> labels, std::size_t n_classes,
                                       std::span<const std::size_t> rows, const TreeParams& params,
                                       std::uint64_t seed);
    static DecisionTree fit_regressor(const Matrix& x, std::span<const double> y, std::span<const std::size_t> rows,
                                      const TreeParams& params, std::uint64_t seed);

    std::size_t leaf_index(std::span<const double> point) const;
    const std::vector<double>& predict(std::span<const double> point) const { return nodes_[leaf_index(point)].value; }

    /// Overwrites a leaf's value (used for Newton leaf steps in boosting).
    void set_leaf_value(std::size_t leaf, std::vector<double> value) { nodes_[leaf].value = std::move(value); }

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    /// Total impurity decrease (sample-weighted) credited to each feature.
    const std::vector<double>& importances() const noexcept { return importances_; }
    int depth() const;

    nlohmann::json to_json() const;
    static DecisionTree from_json(const nlohmann::json& j);

    bool operator==(const DecisionTree&) const = default;

private:
    std::vector<Node> nodes_;
    std::vector<double> importances_;
};

}  // namespace autods::model
