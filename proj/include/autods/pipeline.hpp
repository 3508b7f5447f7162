#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autods/cleaning.hpp"
#include "autods/error.hpp"
#include "autods/features.hpp"
#include "autods/hypothesis/engine.hpp"
#include "autods/ledger.hpp"
#include "autods/model/agent.hpp"
#include "autods/preprocess.hpp"
#include "autods/proposer.hpp"
#include "autods/table.hpp"

namespace autods::pipeline {

struct ProposerConfig {
    std::string kind = "templates";  // templates | llm
    std::size_t max_hypotheses = proposer::kDefaultLimit;
    std::string endpoint;  // llm: http://host:port/v1/chat/completions
    std::string model;
    std::map<std::string, proposer::Price> prices;
    std::size_t max_llm_calls = 4;
    std::size_t max_tokens = 20000;
    double timeout_seconds = 60.0;
    bool fallback_to_templates = true;  // on transport errors
};

struct PipelineConfig {
    std::string name = "full";  // configuration label in ablation tables
    std::filesystem::path input;
    std::string target;
    std::optional<model::Task> task;
    std::uint64_t seed = 0;
    int max_cycles = 2;
    std::filesystem::path output_dir = "out";
    unsigned threads = 1;
    double holdout_fraction = 0.2;
    bool stratify = true;  // classification only; off makes the split independent of the labels
    bool hypothesis = true;
    bool feature_engineering = true;
    ProposerConfig proposer;
    hypothesis::Fdr fdr = hypothesis::Fdr::benjamini_hochberg;
    cleaning::CleaningConfig cleaning;
    preprocess::PlanOptions preprocess;
    std::size_t feature_budget = 200;
    std::size_t max_features = 20;
    bool default_products = true;
    model::AgentOptions model;
    bool wall_clock = false;  // real timestamps and stage seconds in the ledger
};

/// Strict: unknown keys and wrong types are config errors naming the key.
/// Relative paths are resolved against `base_dir`.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& c);

/// Config checks that need the data: the target exists and suits the task.
void validate_against_data(const PipelineConfig& c, const DataTable& data);

/// Stratified (classification) or plain seeded split; row order kept.
struct Split {
    std::vector<std::size_t> train, holdout;
};
Split split_rows(const DataTable& table, const std::string& target, bool stratify, double holdout_fraction, std::uint64_t seed);

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct RunResult {
    MetadataLedger ledger;
    std::vector<hypothesis::HypothesisDoc> docs;
    std::vector<hypothesis::HypothesisVerdict> verdicts;
    features::FeatureResult features;
    model::ModelReport model;
    nlohmann::json hypotheses_json, features_json, model_json, report_json;
    std::string report_md;
    std::vector<proposer::LlmExchange> exchanges;
    double total_cost = 0.0;
    bool budget_exhausted = false;
    std::vector<std::string> warnings;
    std::vector<StageTiming> timings;
    double wall_seconds = 0.0;
};

/// A stage threw. Carries the ledger written so far, ending in a failure
/// entry naming the stage; kind() is the original error's kind.
class StageFailure : public Error {
public:
    StageFailure(ErrorKind kind, std::string stage, const std::string& message, MetadataLedger ledger)
        : Error(kind, stage + ": " + message), stage_(std::move(stage)), ledger_(std::move(ledger)) {}

    const std::string& stage() const noexcept { return stage_; }
    const MetadataLedger& ledger() const noexcept { return ledger_; }

private:
    std::string stage_;
    MetadataLedger ledger_;
};

/// clean, split, cycles of propose / test / preprocess / engineer, model,
/// report. Nothing is written to disk.
RunResult run(const PipelineConfig& config);

/// Loads, cleans and splits like run(), then proposes on the training rows only.
proposer::Proposal propose_only(const PipelineConfig& config, std::vector<std::string>* warnings = nullptr);

/// ledger.json, hypotheses.json, features.json, model.json, report.md,
/// report.json, exchanges.jsonl.
void write_outputs(const RunResult& r, const std::filesystem::path& dir);

struct Toggles {
    std::string name;
    bool hypothesis = true;
    bool feature_engineering = true;
};

/// A JSON list of toggle sets, or {"configurations": [...]}. Needs at least two.
std::vector<Toggles> grid_from_json(const nlohmann::json& j);

struct AblationRow {
    Toggles toggles;
    bool ok = false;
    std::string error;
    std::map<std::string, double> holdout;
    std::size_t feature_count = 0;  // model input columns
    double seconds = 0.0;
};

/// Runs each toggle set on the base config (same data, split and seed).
/// Failures are recorded in their row.
std::vector<AblationRow> ablate(const PipelineConfig& base, const std::vector<Toggles>& grid,
                                std::vector<RunResult>* runs = nullptr);
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_markdown(const std::vector<AblationRow>& rows);

/// 2 config, 3 data, 4 stage, 5 budget.
int exit_code(ErrorKind kind) noexcept;

}  // namespace autods::pipeline
