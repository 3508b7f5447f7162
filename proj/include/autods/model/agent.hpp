#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autods/ledger.hpp"
#include "autods/model/selection.hpp"
#include "autods/table.hpp"

namespace autods::model {

/// Turns table columns into a complete numeric matrix: numeric and boolean
/// columns only, missing cells filled with the training median.
struct Design {
    std::vector<std::string> features;
    std::vector<double> fill;
    std::string target;
    Task task = Task::classification;
    std::vector<std::string> labels;  // classification: class names, index = encoded label
    double positive_label = 1.0;

    Matrix matrix(const DataTable& table) const;
    /// Encoded target; unknown class names are a data error.
    std::vector<double> target_values(const DataTable& table) const;
};

/// Every numeric/boolean column except the target and `exclude`.
Design make_design(const DataTable& train, const std::string& target, Task task, const std::vector<std::string>& exclude = {});

/// Boolean and categorical targets are classification, numeric ones
/// regression unless integer-valued with at most 10 distinct values.
Task infer_task(const Column& target);

enum class EnsemblePolicy { none, voting, stacking, automatic };
const char* to_string(EnsemblePolicy p) noexcept;
EnsemblePolicy parse_ensemble_policy(const std::string& text);

struct AgentOptions {
    std::string target;
    std::optional<Task> task;         // inferred when unset
    std::vector<Algorithm> algorithms;  // empty: every algorithm supporting the task
    std::vector<std::string> exclude;
    std::size_t search_budget = 32;
    std::size_t folds = 5;
    EnsemblePolicy ensemble = EnsemblePolicy::automatic;
    std::size_t ensemble_size = 3;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct ModelReport {
    Design design;
    SearchResult search;
    std::vector<CvResult> ensembles;  // CV of the ensembles that were tried
    std::string chosen_kind;          // single | voting | stacking
    std::string chosen_label;
    std::vector<std::string> members;
    double cv_primary = 0.0;
    MetricSet holdout;
    std::size_t holdout_rows = 0;
    std::vector<std::pair<std::string, double>> importances;  // descending
    ModelPtr model;
};

/// Search over the default grids by k-fold CV on `train`, optionally combine
/// the best models of distinct algorithms, refit on all training rows and
/// score `holdout` once. An ensemble is chosen only when its CV primary
/// metric is strictly higher than the best single model's.
ModelReport train_and_evaluate(const DataTable& train, const DataTable& holdout, const AgentOptions& options,
                               MetadataLedger* ledger = nullptr);

/// The model.json document.
nlohmann::json to_json(const ModelReport& r);

}  // namespace autods::model
