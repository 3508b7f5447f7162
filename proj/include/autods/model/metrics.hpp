#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "autods/model/model.hpp"

namespace autods::model {

/// Classification fields are filled for classification, rmse/r2 for regression.
/// Precision, recall and f1 refer to the positive label for binary targets and
/// are macro-averaged over the observed labels otherwise.
struct MetricSet {
    Task task = Task::classification;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
    std::vector<std::string> warnings;

    /// Named values relevant to the task, in a fixed order.
    std::map<std::string, double> values() const;
    double get(const std::string& metric) const;
};

MetricSet compute_metrics(std::span<const double> y_true, std::span<const double> y_pred, Task task,
                          double positive_label = 1.0);

/// F1 for classification, R^2 for regression. Both are higher-is-better.
const char* primary_metric(Task task) noexcept;

nlohmann::json to_json(const MetricSet& m);

}  // namespace autods::model
