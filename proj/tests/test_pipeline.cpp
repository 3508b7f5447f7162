#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "autods/pipeline.hpp"
#include "autods/synthetic.hpp"
#include "stub_llm.hpp"

using namespace autods;
using namespace autods::pipeline;
using autods::testing::StubLlm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("autods_pipeline_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Small, quick model settings; the pipeline logic is what is under test here.
json quick_config(const std::string& csv, const std::string& target, std::uint64_t seed) {
    return {{"input", csv},
            {"target", target},
            {"seed", seed},
            {"proposer", {{"kind", "templates"}}},
            {"model", {{"algorithms", {"logistic_regression", "decision_tree"}}, {"folds", 3}, {"ensemble", "none"}, {"search_budget", 6}}}};
}

PipelineConfig churn_config(const std::string& name, std::size_t rows = 600, std::uint64_t seed = 3) {
    const fs::path dir = scratch(name);
    write_csv(synthetic::churn(rows, seed), dir / "churn.csv");
    return config_from_json(quick_config("churn.csv", "Exited", seed), dir);
}

ErrorKind kind_of(const json& j) {
    try {
        config_from_json(j);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::stage;
}

std::string message_of(const json& j) {
    try {
        config_from_json(j);
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

bool has_entry(const MetadataLedger& l, const std::string& stage, const std::string& action) {
    for (const auto& e : l.entries())
        if (e.stage == stage && e.action == action) return true;
    return false;
}

}  // namespace

// ------------------------------------------------------------------ config

TEST(Config, UnknownKeysAreRejectedByName) {
    json j = quick_config("x.csv", "y", 1);
    j["sede"] = 4;
    EXPECT_EQ(kind_of(j), ErrorKind::config);
    EXPECT_NE(message_of(j).find("sede"), std::string::npos);

    json k = quick_config("x.csv", "y", 1);
    k["model"]["foldz"] = 3;
    EXPECT_EQ(kind_of(k), ErrorKind::config);
    EXPECT_NE(message_of(k).find("foldz"), std::string::npos);
}

TEST(Config, WrongTypesAndRanges) {
    json j = quick_config("x.csv", "y", 1);
    j["seed"] = "seven";
    EXPECT_EQ(kind_of(j), ErrorKind::config);
    json c = quick_config("x.csv", "y", 1);
    c["max_cycles"] = 3;
    EXPECT_EQ(kind_of(c), ErrorKind::config);
    json h = quick_config("x.csv", "y", 1);
    h["holdout_fraction"] = 1.5;
    EXPECT_EQ(kind_of(h), ErrorKind::config);
    json p = quick_config("x.csv", "y", 1);
    p["proposer"]["kind"] = "oracle";
    EXPECT_EQ(kind_of(p), ErrorKind::config);
    json t = quick_config("x.csv", "", 1);
    EXPECT_EQ(kind_of(t), ErrorKind::config);
}

TEST(Config, LlmProposerNeedsEndpointAndPrice) {
    json j = quick_config("x.csv", "y", 1);
    j["proposer"] = {{"kind", "llm"}, {"model", "m"}};
    EXPECT_EQ(kind_of(j), ErrorKind::config);
    j["proposer"]["endpoint"] = "http://127.0.0.1:1/v1/chat/completions";
    EXPECT_EQ(kind_of(j), ErrorKind::config);  // no price for m
    j["proposer"]["prices"] = {{"m", {{"input_per_1k", 0.01}, {"output_per_1k", 0.02}}}};
    EXPECT_NO_THROW(config_from_json(j));
}

TEST(Config, PathsResolveAgainstTheConfigDirectory) {
    const fs::path dir = scratch("paths");
    json j = quick_config("data/in.csv", "y", 1);
    j["output_dir"] = "results";
    std::ofstream(dir / "c.json") << j.dump();
    const auto c = load_config(dir / "c.json");
    EXPECT_EQ(c.input, dir / "data/in.csv");
    EXPECT_EQ(c.output_dir, dir / "results");
}

TEST(Config, JsonRoundTrip) {
    json j = quick_config("/abs/in.csv", "y", 9);
    j["stages"] = {{"hypothesis", false}};
    j["hypothesis"] = {{"fdr", "none"}};
    j["features"] = {{"budget", 50}, {"max_keep", 7}};
    const auto c = config_from_json(j);
    const json once = to_json(c);
    EXPECT_EQ(to_json(config_from_json(once)), once);
    EXPECT_FALSE(c.hypothesis);
    EXPECT_EQ(c.max_features, 7u);
}

TEST(Config, MissingFileIsConfigErrorAndExitCodes) {
    try {
        load_config("/nonexistent/autods.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
    }
    EXPECT_EQ(exit_code(ErrorKind::config), 2);
    EXPECT_EQ(exit_code(ErrorKind::data), 3);
    EXPECT_EQ(exit_code(ErrorKind::stage), 4);
    EXPECT_EQ(exit_code(ErrorKind::budget), 5);
}

TEST(Config, DataChecks) {
    auto c = churn_config("datachecks", 100);
    c.target = "Ghost";
    EXPECT_THROW(validate_against_data(c, load_csv(c.input)), Error);
    c.target = "Exited";
    EXPECT_NO_THROW(validate_against_data(c, load_csv(c.input)));
    c.input = c.input.parent_path() / "absent.csv";
    try {
        run(c);
        FAIL();
    } catch (const StageFailure& f) {
        EXPECT_EQ(f.kind(), ErrorKind::data);
        EXPECT_EQ(f.stage(), "load");
    }
}

// ------------------------------------------------------------------ split

TEST(Split, StratifiedKeepsClassShares) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const DataTable t = synthetic::churn(997, seed);
        const Split s = split_rows(t, "Exited", true, 0.2, seed);
        EXPECT_EQ(s.train.size() + s.holdout.size(), t.n_rows());
        std::set<std::size_t> all(s.train.begin(), s.train.end());
        all.insert(s.holdout.begin(), s.holdout.end());
        EXPECT_EQ(all.size(), t.n_rows());
        EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
        const Column& y = t.column("Exited");
        for (bool cls : {true, false}) {
            std::size_t total = 0, held = 0;
            for (std::size_t i = 0; i < t.n_rows(); ++i) total += y.truth(i) == cls;
            for (auto i : s.holdout) held += y.truth(i) == cls;
            EXPECT_LE(std::abs(static_cast<double>(held) - 0.2 * static_cast<double>(total)), 1.0);
        }
        const Split again = split_rows(t, "Exited", true, 0.2, seed);
        EXPECT_EQ(again.holdout, s.holdout);
    }
}

TEST(Split, UnstratifiedIgnoresLabels) {
    DataTable t = synthetic::churn(300, 4);
    const Split a = split_rows(t, "Exited", false, 0.25, 11);
    std::vector<bool> flipped(t.n_rows());
    for (std::size_t i = 0; i < t.n_rows(); ++i) flipped[i] = !t.column("Exited").truth(i);
    t = t.replace_column(Column::boolean("Exited", flipped));
    const Split b = split_rows(t, "Exited", false, 0.25, 11);
    EXPECT_EQ(a.holdout, b.holdout);
    EXPECT_EQ(a.holdout.size(), 75u);
}

// ------------------------------------------------------------------ runs

TEST(Run, ProducesEveryStageAndOutput) {
    auto c = churn_config("full");
    const auto r = run(c);
    for (const char* stage : {"load", "cleaning", "split", "hypothesis", "preprocess", "feature", "model", "report"})
        EXPECT_NE(r.ledger.to_json().dump().find(std::string("\"stage\":\"") + stage + "\""), std::string::npos) << stage;
    EXPECT_TRUE(has_entry(r.ledger, "pipeline", "complete"));
    EXPECT_FALSE(r.verdicts.empty());
    EXPECT_EQ(r.verdicts.size(), r.docs.size());
    EXPECT_EQ(r.features_json["catalog"], json(r.model.design.features));
    EXPECT_EQ(r.timings.size(), 9u);  // cycle 2 included

    const fs::path out = c.input.parent_path() / "out";
    write_outputs(r, out);
    for (const char* f : {"ledger.json", "hypotheses.json", "features.json", "model.json", "report.md", "report.json", "exchanges.jsonl"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
    std::ifstream in(out / "ledger.json");
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(MetadataLedger::parse(ss.str()), r.ledger);
}

TEST(Run, NoWallClockDataInTheDefaultLedger) {
    const auto r = run(churn_config("clock", 300));
    for (const auto& e : r.ledger.entries()) {
        EXPECT_EQ(e.ts, "1970-01-01T00:00:00Z");
        EXPECT_NE(e.action, "timing");
    }
    auto c = churn_config("clock_on", 300);
    c.wall_clock = true;
    const auto w = run(c);
    EXPECT_TRUE(has_entry(w.ledger, "pipeline", "timing"));
    EXPECT_NE(w.ledger.entries().front().ts, "1970-01-01T00:00:00Z");
}

TEST(Run, HypothesisOffLeavesNoIndicators) {
    auto c = churn_config("nohyp");
    c.hypothesis = false;
    const auto r = run(c);
    EXPECT_TRUE(r.verdicts.empty());
    EXPECT_TRUE(has_entry(r.ledger, "hypothesis", "skipped"));
    EXPECT_TRUE(has_entry(r.ledger, "hypothesis_cycle2", "skipped"));
    for (const auto& f : r.model.design.features) EXPECT_NE(f.rfind("hyp_", 0), 0u) << f;
    for (const auto& k : r.features.kept) EXPECT_EQ(k.spec.name.find("hyp_"), std::string::npos);
    EXPECT_EQ(r.report_json["hypotheses_tested"], 0);
    EXPECT_TRUE(r.report_json["recommendations"].empty());
}

TEST(Run, FeatureEngineeringOffPassesThrough) {
    auto c = churn_config("nofe");
    c.feature_engineering = false;
    const auto r = run(c);
    EXPECT_TRUE(has_entry(r.ledger, "features", "skipped"));
    EXPECT_TRUE(r.features.kept.empty());
    EXPECT_TRUE(has_entry(r.ledger, "hypothesis_cycle2", "skipped"));
}

TEST(Run, DeterministicAcrossThreadCounts) {
    auto c = churn_config("threads", 800, 5);
    c.model.algorithms = {model::Algorithm::logistic_regression, model::Algorithm::random_forest};
    c.model.ensemble = model::EnsemblePolicy::automatic;
    c.threads = c.cleaning.threads = c.model.threads = 1;
    const auto a = run(c);
    c.threads = c.cleaning.threads = c.model.threads = 4;
    const auto b = run(c);
    const auto again = run(c);
    EXPECT_EQ(a.ledger.dump(), b.ledger.dump());
    EXPECT_EQ(a.report_json.dump(2), b.report_json.dump(2));
    EXPECT_EQ(b.ledger.dump(), again.ledger.dump());
    EXPECT_EQ(a.report_md, b.report_md);
    EXPECT_EQ(a.model_json.dump(), b.model_json.dump());
}

TEST(Run, HoldoutTargetsDoNotReachTrainingStages) {
    const fs::path dir = scratch("leak");
    const DataTable t = synthetic::churn(700, 8);
    write_csv(t, dir / "a.csv");
    json j = quick_config("a.csv", "Exited", 8);
    j["stratify"] = false;
    const auto ca = config_from_json(j, dir);
    // unstratified: the holdout rows depend only on row count and seed
    const Split s = split_rows(t, "Exited", false, ca.holdout_fraction, ca.seed);
    std::vector<bool> y(t.n_rows());
    for (std::size_t i = 0; i < t.n_rows(); ++i) y[i] = t.column("Exited").truth(i);
    for (auto i : s.holdout) y[i] = !y[i];
    write_csv(t.replace_column(Column::boolean("Exited", y)), dir / "b.csv");
    j["input"] = "b.csv";
    const auto cb = config_from_json(j, dir);

    const auto ra = run(ca), rb = run(cb);
    EXPECT_EQ(ra.hypotheses_json.dump(2), rb.hypotheses_json.dump(2));
    EXPECT_EQ(ra.features_json.dump(2), rb.features_json.dump(2));
    auto fits = [](const RunResult& r) {
        json out = json::array();
        for (const auto& e : r.ledger.entries())
            if (e.stage == "preprocess" || e.stage == "cleaning") out.push_back(to_json(e));
        return out.dump();
    };
    EXPECT_EQ(fits(ra), fits(rb));
    // the model sees the same training rows, so the search is identical too
    EXPECT_EQ(ra.model.search.best, rb.model.search.best);
    EXPECT_EQ(ra.model.chosen_label, rb.model.chosen_label);
    EXPECT_NE(ra.model.holdout.values(), rb.model.holdout.values());
}

TEST(Run, ModelStageFailureKeepsThePartialLedger) {
    auto c = churn_config("fail", 200);
    c.model.algorithms = {model::Algorithm::ridge};  // regression only
    try {
        run(c);
        FAIL();
    } catch (const StageFailure& f) {
        EXPECT_EQ(f.stage(), "model");
        EXPECT_EQ(f.kind(), ErrorKind::config);
        EXPECT_EQ(exit_code(f.kind()), 2);
        const auto& last = f.ledger().entries().back();
        EXPECT_EQ(last.stage, "pipeline");
        EXPECT_EQ(last.action, "failed");
        EXPECT_EQ(std::get<std::string>(last.params.at("stage")), "model");
        EXPECT_TRUE(has_entry(f.ledger(), "feature", "prune"));
    }
}

TEST(Run, RegressionTarget) {
    const fs::path dir = scratch("regression");
    DataTable t = synthetic::interaction(500, 2);
    std::vector<double> y(t.n_rows());
    for (std::size_t i = 0; i < t.n_rows(); ++i) y[i] = 2.0 * t.column("x1").number(i) * t.column("x2").number(i) + t.column("x3").number(i);
    write_csv(t.without_columns({"y"}).with_column(Column::numeric("target", y)), dir / "r.csv");
    json j = quick_config("r.csv", "target", 2);
    j["model"]["algorithms"] = {"ridge", "decision_tree"};
    const auto r = run(config_from_json(j, dir));
    EXPECT_EQ(r.model.design.task, model::Task::regression);
    EXPECT_GT(r.model.holdout.get("r2"), 0.9);  // the x1*x2 product is engineered
}

// ------------------------------------------------------------------ llm

namespace {

const char* kDoc =
    R"({"id":"active","statement":"Active members churn less","test":{"kind":"proportion_comparison","group_by":"IsActiveMember","outcome":"Exited"},"indicator":"IsActiveMember"})";

PipelineConfig llm_config(const std::string& name, const std::string& url) {
    const fs::path dir = scratch(name);
    write_csv(synthetic::churn(500, 6), dir / "churn.csv");
    json j = quick_config("churn.csv", "Exited", 6);
    j["proposer"] = {{"kind", "llm"},
                     {"endpoint", url},
                     {"model", "stub-model"},
                     {"timeout_seconds", 5},
                     {"prices", {{"stub-model", {{"input_per_1k", 0.004}, {"output_per_1k", 0.016}}}}}};
    return config_from_json(j, dir);
}

}  // namespace

TEST(Llm, CostIsTokenArithmetic) {
    StubLlm stub({{std::string("[") + kDoc + "]", 1500, 250}});
    const auto r = run(llm_config("llm_cost", stub.url()));
    ASSERT_EQ(r.exchanges.size(), 1u);
    EXPECT_EQ(r.total_cost, 1500 * 0.004 / 1000 + 250 * 0.016 / 1000);
    EXPECT_FALSE(r.budget_exhausted);
    ASSERT_FALSE(r.verdicts.empty());
    EXPECT_EQ(r.verdicts[0].doc_id, "active");
    EXPECT_TRUE(r.verdicts[0].accepted);
    EXPECT_EQ(r.report_json["hypotheses_tested"].get<std::size_t>(), r.verdicts.size());
}

TEST(Llm, BudgetExhaustionIsFlagged) {
    StubLlm stub({{"no json here", 100, 20}, {std::string("[") + kDoc + "]", 100, 20}});
    auto c = llm_config("llm_budget", stub.url());
    c.proposer.max_llm_calls = 1;
    const auto r = run(c);
    EXPECT_TRUE(r.budget_exhausted);
    EXPECT_EQ(stub.requests().size(), 1u);
    EXPECT_EQ(r.total_cost, 100 * 0.004 / 1000 + 20 * 0.016 / 1000);
    EXPECT_TRUE(has_entry(r.ledger, "pipeline", "complete"));
}

TEST(Llm, TransportFailureFallsBackToTemplates) {
    auto c = llm_config("llm_down", "http://127.0.0.1:1/v1/chat/completions");
    const auto r = run(c);
    EXPECT_TRUE(has_entry(r.ledger, "hypothesis", "proposer_fallback"));
    EXPECT_FALSE(r.verdicts.empty());
    EXPECT_FALSE(r.warnings.empty());

    c.proposer.fallback_to_templates = false;
    try {
        run(c);
        FAIL();
    } catch (const StageFailure& f) {
        EXPECT_EQ(f.kind(), ErrorKind::transport);
        EXPECT_EQ(f.stage(), "hypothesis");
    }
}

TEST(Llm, ProposeOnlySeesTrainingRows) {
    StubLlm stub({{std::string("[") + kDoc + "]", 10, 10}});
    const auto p = propose_only(llm_config("llm_propose", stub.url()));
    ASSERT_EQ(p.docs.size(), 1u);
    const std::string prompt = stub.requests()[0]["messages"][1]["content"].get<std::string>();
    EXPECT_NE(prompt.find("\"n_rows\":400"), std::string::npos);  // 80% of 500
}

// ------------------------------------------------------------------ ablation

TEST(Grid, Shapes) {
    const json list = json::parse(R"([{"name":"a"},{"name":"b","hypothesis":false}])");
    const auto g = grid_from_json(list);
    ASSERT_EQ(g.size(), 2u);
    EXPECT_FALSE(g[1].hypothesis);
    EXPECT_TRUE(g[1].feature_engineering);
    EXPECT_EQ(grid_from_json(json{{"configurations", list}}).size(), 2u);
    EXPECT_THROW(grid_from_json(json::parse(R"([{"name":"only"}])")), Error);
    EXPECT_THROW(grid_from_json(json::parse(R"([{"name":"a"},{"name":"a"}])")), Error);
    EXPECT_THROW(grid_from_json(json::parse(R"([{"name":"a"},{"name":"b","bogus":1}])")), Error);
}

TEST(Ablate, RowsMatchStandaloneRuns) {
    auto base = churn_config("ablate", 500, 9);
    const std::vector<Toggles> grid = {{"full", true, true}, {"preprocessing_only", false, false}};
    std::vector<RunResult> runs;
    const auto rows = ablate(base, grid, &runs);
    ASSERT_EQ(rows.size(), 2u);
    ASSERT_EQ(runs.size(), 2u);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_TRUE(rows[i].ok) << rows[i].error;
        EXPECT_EQ(rows[i].feature_count, runs[i].features_json["catalog"].size());
        EXPECT_EQ(rows[i].holdout, runs[i].model.holdout.values());
    }
    auto solo = base;
    solo.name = "preprocessing_only";
    solo.hypothesis = solo.feature_engineering = false;
    const auto r = run(solo);
    EXPECT_EQ(r.ledger.dump(), runs[1].ledger.dump());
    EXPECT_EQ(rows[1].holdout, r.model.holdout.values());

    const std::string csv = ablation_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')).rfind("configuration,hypothesis,feature_engineering,status", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_NE(ablation_markdown(rows).find("| preprocessing_only | off | off |"), std::string::npos);
}

TEST(Ablate, FailuresStayInTheirRow) {
    auto base = churn_config("ablate_fail", 200);
    base.model.algorithms = {model::Algorithm::ridge};
    const auto rows = ablate(base, {{"a", true, true}, {"b", false, false}});
    ASSERT_EQ(rows.size(), 2u);
    for (const auto& r : rows) {
        EXPECT_FALSE(r.ok);
        EXPECT_FALSE(r.error.empty());
    }
    EXPECT_NE(ablation_csv(rows).find("failed"), std::string::npos);
}
