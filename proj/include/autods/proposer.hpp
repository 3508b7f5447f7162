#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autods/hypothesis/dsl.hpp"
#include "autods/table.hpp"

namespace autods::proposer {

using hypothesis::HypothesisDoc;

nlohmann::json to_json(const ColumnSummary& s);

inline constexpr std::size_t kDefaultLimit = 24;

/// Boolean and low-cardinality columns against the target, numeric columns
/// split at q1/median/q3 (classification targets) or correlated with the
/// target (regression targets). Column order, then kind. Needs only the
/// summaries, never the rows.
std::vector<HypothesisDoc> enumerate_templates(const std::vector<ColumnSummary>& summaries, const std::string& target,
                                               std::size_t limit = kDefaultLimit);

struct Price {
    double input_per_1k = 0.0;
    double output_per_1k = 0.0;
};

struct ProposalBudget {
    std::size_t max_hypotheses = kDefaultLimit;
    std::size_t max_llm_calls = 4;
    std::size_t max_tokens = 20000;
    std::map<std::string, Price> prices;

    void validate() const;
};

/// cost = input_tokens * price_in / 1000 + output_tokens * price_out / 1000
double exchange_cost(std::size_t input_tokens, std::size_t output_tokens, const Price& price);

struct LlmEndpoint {
    std::string url;  // http://host:port/path of a chat-completions route
    std::string model;
    std::string api_key;
    double timeout_seconds = 60.0;
};

struct LlmExchange {
    std::string model_name;
    std::string prompt;
    std::string response_text;
    std::size_t input_tokens = 0;
    std::size_t output_tokens = 0;
    double cost = 0.0;
    bool ok = false;
    std::vector<std::string> reasons;  // why the response was rejected
    bool repair = false;

    bool operator==(const LlmExchange&) const = default;
};

nlohmann::json to_json(const LlmExchange& e);
LlmExchange exchange_from_json(const nlohmann::json& j);

/// One JSON object per line.
std::string to_jsonl(const std::vector<LlmExchange>& exchanges);

/// Issues that keep a doc out of the batch (empty when acceptable).
using DocValidator = std::function<std::vector<std::string>(const HypothesisDoc&)>;

struct Proposal {
    std::vector<HypothesisDoc> docs;
    std::vector<LlmExchange> exchanges;
    double total_cost = 0.0;  // sum of exchange costs, in exchange order
    std::size_t total_tokens = 0;
    bool budget_exhausted = false;
    std::vector<std::string> warnings;
};

/// Sends summaries and the DSL description, parses the reply, and on any
/// rejection sends one repair request carrying the collected issues. HTTP
/// failures throw a transport error. Running out of budget stops further
/// calls and returns what was accepted so far.
Proposal llm_propose(const std::vector<ColumnSummary>& summaries, const std::string& target, const ProposalBudget& budget,
                     const LlmEndpoint& endpoint, const DocValidator& validator = {});

/// Prompt text for the first request.
std::string build_prompt(const std::vector<ColumnSummary>& summaries, const std::string& target, std::size_t max_docs);

/// Docs from a model reply: bare JSON or a fenced block holding an array,
/// a single doc, or {"hypotheses": [...]}. Invalid docs are skipped and
/// their issues returned.
struct ParsedReply {
    std::vector<HypothesisDoc> docs;
    std::vector<std::string> issues;
};
ParsedReply parse_reply(const std::string& text, const DocValidator& validator);

/// Validator that only checks kinds against a zero-row schema built from the summaries.
DocValidator schema_validator(const std::vector<ColumnSummary>& summaries);

}  // namespace autods::proposer
