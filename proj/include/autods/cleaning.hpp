#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autods/ledger.hpp"
#include "autods/table.hpp"

namespace autods::cleaning {

enum class NumericStrategy { mean, median, mice, forest };
enum class CategoricalStrategy { mode, missing_category };
enum class OutlierMethod { zscore, iqr };
enum class OutlierAction { flag, winsorize, drop_row };

const char* to_string(NumericStrategy s) noexcept;
const char* to_string(CategoricalStrategy s) noexcept;
const char* to_string(OutlierMethod m) noexcept;
const char* to_string(OutlierAction a) noexcept;
NumericStrategy parse_numeric_strategy(const std::string& text);
CategoricalStrategy parse_categorical_strategy(const std::string& text);
OutlierMethod parse_outlier_method(const std::string& text);
OutlierAction parse_outlier_action(const std::string& text);

inline constexpr const char* kMissingCategory = "__missing__";

struct CleaningConfig {
    std::string target;                        // never imputed, never used as a predictor
    std::vector<std::string> exclude;          // left untouched
    double median_below = 0.05;                // numeric missing fraction < this -> median
    double mice_up_to = 0.30;                  // <= this -> mice, above -> forest
    double categorical_missing_above = 0.01;   // categorical missing fraction > this -> __missing__
    std::map<std::string, NumericStrategy> numeric_overrides;
    std::map<std::string, CategoricalStrategy> categorical_overrides;
    bool outliers = true;
    OutlierMethod outlier_method = OutlierMethod::iqr;
    OutlierAction outlier_action = OutlierAction::flag;
    double z_threshold = 3.0;
    double iqr_k = 1.5;
    int mice_iterations = 10;
    double mice_lambda = 1e-3;
    int forest_trees = 50;
    int forest_depth = 8;
    int forest_iterations = 3;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

/// Strategy for one column. Boolean columns use the mode and datetime
/// columns the median; neither gets outlier treatment.
struct ColumnPlan {
    std::string column;
    ColumnKind kind = ColumnKind::numeric;
    std::size_t missing = 0;
    double missing_fraction = 0.0;
    std::optional<NumericStrategy> numeric;
    std::optional<CategoricalStrategy> categorical;
    bool outliers = false;
};

struct CleaningPlan {
    std::vector<ColumnPlan> columns;
    OutlierMethod outlier_method = OutlierMethod::iqr;
    OutlierAction outlier_action = OutlierAction::flag;
    double z_threshold = 3.0;
    double iqr_k = 1.5;

    /// Throws config error on non-positive thresholds or a column planned twice.
    void validate() const;
    const ColumnPlan* find(const std::string& column) const;
};

nlohmann::json to_json(const CleaningPlan& plan);

CleaningPlan plan_cleaning(const DataTable& table, const CleaningConfig& config);

/// Mean/median (numeric, datetime), mode (boolean, categorical) or the
/// missing category, written only to missing cells.
DataTable impute_simple(const DataTable& table, const std::string& column, const ColumnPlan& plan,
                        MetadataLedger* ledger = nullptr);

struct ChainedOptions {
    std::vector<std::string> predictors;  // numeric columns; empty means every numeric column besides `exclude`
    std::vector<std::string> exclude;
    int iterations = 10;
    double lambda = 1e-3;
    int trees = 50;
    int depth = 8;
    unsigned threads = 1;
};

/// Chained ridge regressions, columns visited by ascending missingness and
/// started from the median. Imputed values are conditional means (no draws);
/// the seed is recorded in the ledger. Targets with more than 90% missing, or
/// with no usable predictor, fall back to the median with a warning.
DataTable impute_mice(const DataTable& table, const std::vector<std::string>& targets, std::uint64_t seed,
                      const ChainedOptions& options = {}, MetadataLedger* ledger = nullptr);

/// As impute_mice with random-forest regressors.
DataTable impute_forest(const DataTable& table, const std::vector<std::string>& targets, std::uint64_t seed,
                        const ChainedOptions& options = {.iterations = 3}, MetadataLedger* ledger = nullptr);

/// Detects outliers on columns planned for it; flag adds `<col>__outlier`
/// (only when something was detected), winsorize clips to the bounds,
/// drop_row removes the union of outlier rows.
DataTable handle_outliers(const DataTable& table, const CleaningPlan& plan, MetadataLedger* ledger = nullptr);

struct CleaningResult {
    DataTable table;
    CleaningPlan plan;
};

/// plan, impute (simple strategies first, then mice, then forest), outliers.
CleaningResult clean(const DataTable& table, const CleaningConfig& config, MetadataLedger* ledger = nullptr);

}  // namespace autods::cleaning
