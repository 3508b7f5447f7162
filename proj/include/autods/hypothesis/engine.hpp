#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "autods/hypothesis/dsl.hpp"
#include "autods/ledger.hpp"
#include "autods/stats/inference.hpp"
#include "autods/table.hpp"

namespace autods::hypothesis {

enum class Fdr { none, benjamini_hochberg };

const char* to_string(Fdr f) noexcept;
Fdr parse_fdr(const std::string& text);

/// Step-up Benjamini-Hochberg adjusted p-values, monotone in the raw order
/// and clipped to 1. Throws a domain error for values outside [0, 1].
std::vector<double> bh_adjust(std::span<const double> p_values);

struct HypothesisVerdict {
    std::string doc_id;
    std::string statement;
    TestKind kind = TestKind::mean_comparison;
    std::string operation;
    std::vector<std::string> columns;  // every column the test read
    stats::TestResult result;
    double alpha = 0.05;
    double adjusted_p = 1.0;
    bool accepted = false;  // adjusted_p < alpha
    bool descriptive = false;
    std::optional<std::string> indicator_column;
    std::vector<std::string> attached_columns;  // descriptive score or flag columns
    nlohmann::json details = nlohmann::json::object();
    std::optional<std::string> error;

    bool operator==(const HypothesisVerdict&) const = default;
};

nlohmann::json to_json(const HypothesisVerdict& v);
HypothesisVerdict verdict_from_json(const nlohmann::json& j);

struct BatchOptions {
    Fdr fdr = Fdr::none;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct BatchResult {
    DataTable table;  // input plus hyp_* columns
    std::vector<HypothesisVerdict> verdicts;  // in doc order
};

/// Compiles and runs each doc. Failures stay inside their own verdict
/// (accepted = false, adjusted_p = 1) and are left out of the BH family, as
/// are descriptive kinds, whose p is 0 or 1 by their criterion.
BatchResult run_batch(const DataTable& table, const std::vector<HypothesisDoc>& docs, const BatchOptions& options = {},
                      MetadataLedger* ledger = nullptr);

/// The hypotheses.json document: docs and verdicts side by side.
nlohmann::json hypotheses_report(const std::vector<HypothesisDoc>& docs, const std::vector<HypothesisVerdict>& verdicts,
                                 Fdr fdr);

}  // namespace autods::hypothesis
