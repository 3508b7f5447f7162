#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "autods/hypothesis/engine.hpp"
#include "autods/ledger.hpp"
#include "autods/table.hpp"

namespace autods::features {

/// Arithmetic over numeric/boolean columns and constants.
///
///   sum     := product (("+" | "-") product)*
///   product := unary (("*" | "/") unary)*
///   unary   := "-" unary | power
///   power   := atom [("^" | "**") unary]
///   atom    := number | column | `column` | func "(" sum ")" | "(" sum ")"
/// Functions: log log1p sqrt abs tan sin cos rank_pct. The Unicode minus,
/// times and division signs are accepted.
///
/// Undefined results are missing cells rather than errors or infinities:
/// x/0, log(x <= 0), log1p(x <= -1), sqrt(x < 0), tan where |cos| < 1e-12 and
/// any other non-finite value.
struct Formula {
    enum class Node { column, constant, add, sub, mul, div, pow, neg, call };

    Node node = Node::constant;
    std::string name;  // column or function
    double value = 0.0;
    std::vector<Formula> args;
    std::vector<double> reference;  // rank_pct: sorted fitted values of the argument

    static Formula column(std::string name);
    static Formula constant(double v);
    static Formula binary(Node op, Formula a, Formula b);
    static Formula call(std::string fn, Formula arg);
    static Formula negate(Formula a);

    bool operator==(const Formula&) const = default;
};

/// Throws ValidationError.
Formula parse_formula(std::string_view text);
/// Canonical text; parse_formula(to_string(f)) equals f without its fitted references.
std::string to_string(const Formula& f);
std::vector<std::string> referenced_columns(const Formula& f);
std::vector<std::string> typecheck(const Formula& f, const DataTable& table);

struct Values {
    std::vector<double> value;
    std::vector<std::uint8_t> missing;
};

/// rank_pct uses the fitted reference when present, else the column being evaluated.
Values evaluate(const Formula& f, const DataTable& table);
/// Stores rank_pct references from `table`.
Formula fit_formula(Formula f, const DataTable& table);

/// Average-rank percentile of x within sorted data, in (0, 1].
double rank_pct(std::span<const double> sorted, double x);

enum class Generator { formula, interaction, aggregate, lag, rolling, pca };

const char* to_string(Generator g) noexcept;

struct FeatureSpec {
    std::string name;
    Generator generator = Generator::formula;
    std::optional<Formula> formula;
    /// interaction: factors; aggregate: {group, value}; lag and rolling: {value};
    /// pca: the blended columns
    std::vector<std::string> columns;
    std::string order_by;    // lag, rolling: datetime column giving row order
    std::string stat = "mean";  // aggregate: mean|std|count|min|max; rolling: mean|std|min|max|sum
    int lag = 1;
    int window = 5;
    std::size_t component = 0;  // pca
    double variance_target = 0.95;
    std::vector<std::string> provenance;  // hypothesis ids
    double priority = 1.0;                // p-value of the motivating verdict, 1 for defaults

    bool fitted = false;
    std::map<std::string, double> group_values;  // aggregate
    double fallback = 0.0;                       // aggregate, unseen group
    std::vector<double> means, scales, loading;  // pca

    bool operator==(const FeatureSpec&) const = default;
};

nlohmann::json to_json(const FeatureSpec& s);
FeatureSpec feature_from_json(const nlohmann::json& j);

struct CandidateOptions {
    std::string target;
    /// Columns that may be combined; empty means every numeric column except
    /// the target and hyp_* columns.
    std::vector<std::string> columns;
    std::size_t budget = 200;
    double skew_threshold = 1.0;
    double pca_min_r = 0.6;
    std::size_t pca_min_columns = 6;
    bool default_products = true;
};

/// Candidates from accepted verdicts first (p ascending, then generator
/// order): product, ratio and difference for each pair of implicated columns,
/// group mean/std for categorical segments. Then skew transforms, lag-1 and
/// rolling-mean(5) when a datetime column exists, PCA scores for a block of
/// at least 6 mutually correlated columns, and pairwise products of the
/// remaining columns. Names are unique; the list is cut at the budget.
std::vector<FeatureSpec> generate_candidates(const DataTable& table, const std::vector<hypothesis::HypothesisVerdict>& verdicts,
                                             const CandidateOptions& options);

/// Statistics a spec needs from training rows (aggregate maps, rank_pct
/// references, PCA loadings).
FeatureSpec fit_feature(FeatureSpec spec, const DataTable& table);

/// Appends one column per spec, fitting unfitted specs on `table`. Every
/// name is checked before anything is written.
DataTable materialize(const DataTable& table, std::vector<FeatureSpec>& specs, unsigned threads = 1);
DataTable materialize_fitted(const DataTable& table, const std::vector<FeatureSpec>& specs, unsigned threads = 1);

struct Ranked {
    FeatureSpec spec;
    double relevance = 0.0;  // |r| with the target
    std::size_t missing_cells = 0;
};

/// Ranks materialized features by |Pearson r| with a numeric target
/// (point-biserial for boolean and two-level categorical targets), drops
/// constant features and any with |r| > dedup_r against a higher-ranked
/// kept one, and keeps the first max_keep.
std::vector<Ranked> prune(const DataTable& table, const std::vector<FeatureSpec>& specs, const std::string& target,
                          std::size_t max_keep, double dedup_r = 0.98);

struct FeatureResult {
    DataTable table;             // input plus kept features
    std::vector<Ranked> kept;    // fitted
    std::vector<FeatureSpec> candidates;
};

/// generate, materialize, prune; writes one ledger entry per kept feature.
FeatureResult engineer(const DataTable& table, const std::vector<hypothesis::HypothesisVerdict>& verdicts,
                       const CandidateOptions& options, std::size_t max_keep, unsigned threads = 1,
                       MetadataLedger* ledger = nullptr);

/// The features.json document.
nlohmann::json features_report(const FeatureResult& result);

}  // namespace autods::features
