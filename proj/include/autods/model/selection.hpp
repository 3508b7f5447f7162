#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "autods/model/metrics.hpp"
#include "autods/model/model.hpp"

namespace autods::model {

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// k shuffled folds. With `labels`, each class is dealt round-robin so
/// per-class proportions hold to within one row, and a fold whose training
/// part lacks a class gets one instance moved over from its test part
/// (recorded in `warnings`).
std::vector<Fold> make_folds(std::size_t n, std::size_t k, std::uint64_t seed,
                             std::optional<std::span<const double>> labels = std::nullopt,
                             std::vector<std::string>* warnings = nullptr);

struct CvOptions {
    std::size_t folds = 5;
    bool stratified = true;  // classification only
    std::uint64_t seed = 0;
    double positive_label = 1.0;
    unsigned threads = 1;
};

struct CvResult {
    ModelSpec spec;
    std::string label;
    std::vector<MetricSet> fold_metrics;
    std::map<std::string, double> mean;
    std::map<std::string, double> sd;
    std::vector<std::string> warnings;

    double primary() const { return mean.at(primary_metric(spec.task)); }
};

CvResult cross_validate(const ModelSpec& spec, const Matrix& x, std::span<const double> y, const CvOptions& options);

/// Comparison key for "smaller model": lower is simpler.
std::vector<double> complexity(const ModelSpec& spec);

/// True when `a` beats `b`: higher primary metric, then the smaller model,
/// then the lexicographically smaller label.
bool better(const CvResult& a, const CvResult& b);

/// Cartesian product of per-hyperparameter value lists.
std::vector<ModelSpec> expand_grid(Algorithm algorithm, Task task, const std::map<std::string, std::vector<double>>& grid,
                                   std::uint64_t seed);

/// Small built-in grid per algorithm.
std::map<std::string, std::vector<double>> default_grid(Algorithm algorithm);

struct SearchResult {
    std::vector<CvResult> trials;
    std::size_t best = 0;
    std::size_t skipped = 0;  // candidates left out by the budget

    const CvResult& winner() const { return trials.at(best); }
};

/// Evaluates at most `budget` candidates by CV. Larger candidate lists are
/// subsampled without replacement (seeded), keeping their original order.
SearchResult search(const std::vector<ModelSpec>& candidates, const Matrix& x, std::span<const double> y,
                    std::size_t budget, const CvOptions& options);

/// Out-of-fold member outputs (see meta_features): row i's value comes from
/// a member fitted without row i. Folds ignore the target.
Matrix oof_meta_features(const std::vector<ModelSpec>& members, const Matrix& x, std::span<const double> y,
                         std::size_t folds, std::uint64_t seed, unsigned threads = 1);

/// Members refit on all rows; meta model fitted on the out-of-fold outputs.
ModelPtr train_stacking(const std::vector<ModelSpec>& members, const ModelSpec& meta, const Matrix& x,
                        std::span<const double> y, std::size_t folds, std::uint64_t seed, unsigned threads = 1);

nlohmann::json to_json(const CvResult& r);

}  // namespace autods::model
