#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autods/features.hpp"
#include "autods/hypothesis/dsl.hpp"
#include "autods/hypothesis/engine.hpp"
#include "autods/ledger.hpp"
#include "autods/model/agent.hpp"
#include "autods/table.hpp"

namespace autods::report {

/// Plain-units effect of one verdict. Two-group proportion tests give rates,
/// two-group location tests give means, correlation gives r and regression
/// the slope, each with a Wald 95% interval. Anything else is descriptive.
struct Effect {
    std::string kind = "descriptive";  // rate | mean | correlation | slope | descriptive
    std::string subject;               // outcome or value column (y for correlation and slope)
    std::string driver;                // x for correlation and slope
    std::string level;                 // rate: the counted outcome level
    std::string group_a, group_b;      // plain descriptions, a = first group
    double a = 0.0, b = 0.0;           // rates or means; correlation and slope use `a`
    std::size_t n_a = 0, n_b = 0;
    double difference = 0.0;           // a - b, or the coefficient itself
    std::optional<double> relative;    // a / b - 1
    double ci_low = 0.0, ci_high = 0.0;
    std::string summary;               // descriptive kinds

    bool directional() const { return kind != "descriptive"; }
};

/// `table` is the one the verdict was computed on.
Effect effect_size(const hypothesis::HypothesisDoc& doc, const hypothesis::HypothesisVerdict& verdict, const DataTable& table);

struct Inputs {
    std::string target;
    const std::vector<hypothesis::HypothesisDoc>* docs = nullptr;
    const std::vector<hypothesis::HypothesisVerdict>* verdicts = nullptr;
    const DataTable* table = nullptr;
    const features::FeatureResult* features = nullptr;
    const model::ModelReport* model = nullptr;
    std::vector<std::string> notes;  // stage warnings, skipped stages
};

/// The report.json document. Findings are the accepted verdicts ordered by
/// adjusted p then id; every number the Markdown shows is stored here as
/// display text. Recommendations exist only for accepted directional findings.
nlohmann::json build_report(const Inputs& inputs, MetadataLedger* ledger = nullptr);

/// report.md, rendered from report.json alone.
std::string render_markdown(const nlohmann::json& report);

/// Number-like tokens of a text, e.g. "20.0", "-0.25", "3.1e-05".
std::vector<std::string> numeric_tokens(const std::string& text);

/// Problems with a report: Markdown numbers missing from the JSON, and
/// recommendations whose provenance is not an accepted verdict.
std::vector<std::string> check_integrity(const nlohmann::json& report, const std::string& markdown,
                                         const std::vector<hypothesis::HypothesisVerdict>& verdicts);

}  // namespace autods::report
