#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autods/hypothesis/engine.hpp"
#include "autods/hypothesis/expr.hpp"
#include "autods/ledger.hpp"
#include "autods/table.hpp"

namespace autods::preprocess {

enum class TransformKind {
    standard_scale,
    minmax_scale,
    robust_scale,
    one_hot,
    label_encode,
    target_encode,
    bin,
    indicator,
    log,
    sqrt,
    power,
};

const char* to_string(TransformKind k) noexcept;
/// Throws config error for unknown names.
TransformKind parse_transform_kind(const std::string& text);

inline constexpr const char* kOtherCategory = "__other__";

/// One derived-column recipe plus, once fitted, the statistics that replay it.
///
/// Default output names: scaled_, minmax_, robust_, label_, target_encoded_,
/// bucketed_, log_, sqrt_, power_ followed by the source name. one_hot writes
/// encoded_<col> for two categories (1 = the second in sorted order) and
/// encoded_<col>_<level> otherwise. indicator has no default and needs `name`.
struct TransformSpec {
    TransformKind kind = TransformKind::standard_scale;
    std::string source;
    std::string name;  // output override for single-output kinds

    std::vector<double> edges;         // bin, strictly increasing
    std::vector<std::string> labels;   // bin, one per interval
    bool open_ends = false;            // bin: outer intervals extend to +-infinity
    std::optional<hypothesis::Expr> condition;  // indicator
    std::string target;                // target_encode
    double smoothing = 20.0;
    int folds = 5;
    std::uint64_t seed = 0;
    std::vector<std::string> provenance;  // hypothesis ids

    bool fitted = false;
    double center = 0.0;  // scale kinds: mean, min or median
    double scale = 1.0;   // std, range or IQR (1 when degenerate)
    std::string method;   // power: box_cox | yeo_johnson
    double lambda = 1.0;
    std::vector<std::string> categories;  // one_hot, label_encode (sorted)
    std::map<std::string, double> encoding;  // target_encode, full-data smoothed means
    double prior = 0.0;                      // target_encode global mean, used for unseen categories

    /// Throws config error on inconsistent parameters.
    void validate() const;
    /// Output names; one_hot needs to be fitted.
    std::vector<std::string> outputs() const;

    bool operator==(const TransformSpec&) const = default;
};

nlohmann::json to_json(const TransformSpec& spec);
TransformSpec spec_from_json(const nlohmann::json& j);

struct Fitted {
    DataTable table;
    TransformSpec spec;
};

/// Fits on non-missing rows of `table` and appends the outputs. target_encode
/// writes out-of-fold values here (k folds, smoothed toward the out-of-fold
/// global mean), so its fit output differs from a later apply_fitted.
/// log needs x > 0 and sqrt x >= 0 on every present cell (domain error naming
/// the rows otherwise). Output names already in the table are a schema error.
Fitted fit_transform(const DataTable& table, TransformSpec spec, MetadataLedger* ledger = nullptr);

/// Replays a fitted spec with its stored statistics. Unseen categories give
/// an all-zero one_hot block, the reserved code categories.size() under
/// label_encode and the prior under target_encode. Cells outside a
/// transform's domain become missing.
DataTable apply_fitted(const DataTable& table, const TransformSpec& spec);

/// Maximum-likelihood lambda over [-5, 5].
double box_cox_lambda(const std::vector<double>& positive);
double yeo_johnson_lambda(const std::vector<double>& values);
double box_cox(double x, double lambda);
double yeo_johnson(double x, double lambda);

struct PlanOptions {
    std::size_t one_hot_max_levels = 10;
    double skew_threshold = 1.0;
    bool bin_uninvolved = true;
    std::uint64_t seed = 0;
};

/// Numeric columns read by an accepted correlation, regression or
/// mean-comparison verdict are scaled and never binned. With verdicts present,
/// other numerics are also quartile-binned and the bins one-hot encoded.
/// Skewed numerics get a power transform, categoricals one_hot (few levels)
/// or target_encode. The target and hyp_* columns are never a source.
std::vector<TransformSpec> hypothesis_aware_plan(const DataTable& table,
                                                 const std::vector<hypothesis::HypothesisVerdict>& verdicts,
                                                 const std::string& target, const PlanOptions& options = {});

struct PlanResult {
    DataTable table;
    std::vector<TransformSpec> specs;  // fitted
};

/// Fits specs in order; a spec may read an earlier spec's output. When the
/// target is numeric or boolean, a diagnostic entry compares each 1:1 numeric
/// output's correlation with the target to its source's.
PlanResult fit_plan(const DataTable& table, std::vector<TransformSpec> specs, const std::string& target,
                    MetadataLedger* ledger = nullptr);
DataTable apply_plan(const DataTable& table, const std::vector<TransformSpec>& fitted);

}  // namespace autods::preprocess
