#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "autods/linalg.hpp"

namespace autods::model {

enum class Task { classification, regression };
enum class Algorithm {
    linear_regression,
    ridge,
    lasso,
    logistic_regression,
    knn,
    decision_tree,
    random_forest,
    gradient_boosting,
};

const char* to_string(Task t) noexcept;
const char* to_string(Algorithm a) noexcept;
Task parse_task(const std::string& text);
Algorithm parse_algorithm(const std::string& text);

/// Algorithm, task and hyperparameters. Unset hyperparameters take the
/// algorithm's default; `validate` rejects unknown names and out-of-range values.
struct ModelSpec {
    Algorithm algorithm = Algorithm::logistic_regression;
    Task task = Task::classification;
    std::map<std::string, double> params;
    std::uint64_t seed = 0;

    double param(const std::string& name) const;
    /// Stable human-readable label, e.g. "ridge(lambda=1)".
    std::string label() const;

    bool operator==(const ModelSpec&) const = default;
};

/// Default value and inclusive range of one hyperparameter.
struct ParamRange {
    double default_value;
    double min;
    double max;
    bool integer;
};

const std::map<std::string, ParamRange>& param_ranges(Algorithm a);
bool supports(Algorithm a, Task t) noexcept;
void validate(const ModelSpec& spec);

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

/// A fitted estimator. Classification targets are arbitrary numeric labels;
/// binary models treat the larger label as the positive class.
class TrainedModel {
public:
    virtual ~TrainedModel() = default;

    const ModelSpec& spec() const noexcept { return spec_; }
    Task task() const noexcept { return spec_.task; }
    virtual std::string name() const { return spec_.label(); }
    /// Class labels (classification) or values (regression).
    virtual std::vector<double> predict(const Matrix& x) const = 0;
    /// Probability of every class label, one row per sample; classification only.
    virtual Matrix predict_proba(const Matrix& x) const;
    const std::vector<double>& classes() const noexcept { return classes_; }
    /// Non-negative, summing to 1 when any is positive.
    const std::vector<double>& feature_importances() const noexcept { return importances_; }
    /// Notes raised while fitting (e.g. ridge fallback).
    const std::vector<std::string>& notes() const noexcept { return notes_; }

    nlohmann::json to_json() const;

protected:
    explicit TrainedModel(ModelSpec spec) : spec_(std::move(spec)) {}
    virtual nlohmann::json state_json() const = 0;

    ModelSpec spec_;
    std::vector<double> classes_;
    std::vector<double> importances_;
    std::vector<std::string> notes_;

    friend std::shared_ptr<const TrainedModel> model_from_json(const nlohmann::json& j);
};

using ModelPtr = std::shared_ptr<const TrainedModel>;

struct TrainOptions {
    unsigned threads = 1;
};

/// Throws a domain error on shape or label problems; X must be complete.
ModelPtr train(const ModelSpec& spec, const Matrix& x, std::span<const double> y, const TrainOptions& options = {});

ModelPtr model_from_json(const nlohmann::json& j);

/// Simple combinations of fitted models.
ModelPtr make_voting(std::vector<ModelPtr> members);
/// Meta model over member outputs; members and meta are already fitted.
ModelPtr make_stacking(std::vector<ModelPtr> members, ModelPtr meta);

/// Member outputs used as meta-features: positive-class probability for
/// binary classification, the prediction otherwise. One column per member.
Matrix meta_features(const std::vector<ModelPtr>& members, const Matrix& x);

}  // namespace autods::model
