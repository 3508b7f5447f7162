#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "autods/hypothesis/engine.hpp"
#include "autods/proposer.hpp"
#include "autods/report.hpp"
#include "autods/rng.hpp"
#include "autods/synthetic.hpp"

using namespace autods;
using namespace autods::report;
using hypothesis::HypothesisDoc;
using nlohmann::json;

namespace {

HypothesisDoc doc(const char* text) { return hypothesis::parse_hypothesis(text); }

const char* kRate = R"({"id":"g_rate","statement":"g changes y","test":{"kind":"proportion_comparison","group_by":"g","outcome":"y"}})";
const char* kMean = R"({"id":"g_mean","statement":"g changes v","test":{"kind":"mean_comparison","group_by":"g","value":"v"}})";

// n_true rows with g = true, of which k_true have y = true; same for false
DataTable rates_table(std::size_t n_true, std::size_t k_true, std::size_t n_false, std::size_t k_false) {
    std::vector<bool> g, y;
    for (std::size_t i = 0; i < n_true; ++i) g.push_back(true), y.push_back(i < k_true);
    for (std::size_t i = 0; i < n_false; ++i) g.push_back(false), y.push_back(i < k_false);
    return DataTable({Column::boolean("g", g), Column::boolean("y", y)});
}

struct ChurnRun {
    std::vector<HypothesisDoc> docs;
    hypothesis::BatchResult batch;
};

ChurnRun churn_run(std::size_t n, std::uint64_t seed) {
    ChurnRun r;
    const DataTable t = synthetic::churn(n, seed);
    r.docs = proposer::enumerate_templates(summarize(t), "Exited");
    r.batch = hypothesis::run_batch(t, r.docs, {.fdr = hypothesis::Fdr::benjamini_hochberg, .seed = seed});
    return r;
}

}  // namespace

TEST(EffectSize, RatesTwentyVersusForty) {
    const DataTable t = rates_table(10, 2, 10, 4);
    const auto d = doc(kRate);
    const auto b = hypothesis::run_batch(t, {d});
    const Effect e = effect_size(d, b.verdicts[0], t);
    EXPECT_EQ(e.kind, "rate");
    EXPECT_DOUBLE_EQ(e.a, 0.2);
    EXPECT_DOUBLE_EQ(e.b, 0.4);
    EXPECT_NEAR(e.difference, -0.2, 1e-15);
    ASSERT_TRUE(e.relative);
    EXPECT_NEAR(*e.relative, -0.5, 1e-15);
    const double se = std::sqrt(0.2 * 0.8 / 10 + 0.4 * 0.6 / 10);
    EXPECT_NEAR(e.ci_low, -0.2 - 1.959963984540054 * se, 1e-12);
    EXPECT_NEAR(e.ci_high, -0.2 + 1.959963984540054 * se, 1e-12);
    EXPECT_EQ(e.group_a, "rows with g = true");
    EXPECT_EQ(e.level, "true");
}

TEST(EffectSize, FindingSentenceUsesRelativeWording) {
    const DataTable t = rates_table(500, 100, 500, 200);
    const auto d = doc(kRate);
    const auto b = hypothesis::run_batch(t, {d});
    ASSERT_TRUE(b.verdicts[0].accepted);
    const json r = build_report({.target = "y", .verdicts = &b.verdicts, .table = &t});
    // without docs the effect is descriptive
    EXPECT_EQ(r["findings"][0]["effect"]["kind"], "descriptive");
    const std::vector<HypothesisDoc> docs = {d};
    const json full = build_report({.target = "y", .docs = &docs, .verdicts = &b.verdicts, .table = &t});
    const std::string s = full["findings"][0]["sentence"];
    EXPECT_NE(s.find("50% less likely"), std::string::npos) << s;
    EXPECT_NE(s.find("20.0%"), std::string::npos) << s;
    EXPECT_NE(s.find("40.0%"), std::string::npos) << s;
    EXPECT_EQ(full["recommendations"].size(), 1u);
}

TEST(EffectSize, EqualMeansGiveZero) {
    const DataTable t({Column::boolean("g", {true, true, false, false}), Column::numeric("v", {9, 11, 8, 12})});
    const auto d = doc(kMean);
    const auto b = hypothesis::run_batch(t, {d});
    const Effect e = effect_size(d, b.verdicts[0], t);
    EXPECT_EQ(e.kind, "mean");
    EXPECT_DOUBLE_EQ(e.a, 10.0);
    EXPECT_DOUBLE_EQ(e.b, 10.0);
    EXPECT_DOUBLE_EQ(e.difference, 0.0);
    EXPECT_DOUBLE_EQ(*e.relative, 0.0);
    // Welch standard error: sqrt(2/2 + 8/2)
    EXPECT_NEAR(e.ci_high, 1.959963984540054 * std::sqrt(5.0), 1e-12);
}

TEST(EffectSize, RateIntervalCoverage) {
    std::size_t covered = 0;
    for (std::uint64_t s = 0; s < 500; ++s) {
        Rng rng(derive_seed(77, s));
        std::vector<bool> g(500), y(500);
        for (std::size_t i = 0; i < 500; ++i) {
            g[i] = i % 2 == 0;
            y[i] = rng.bernoulli(g[i] ? 0.2 : 0.4);
        }
        const DataTable t({Column::boolean("g", g), Column::boolean("y", y)});
        const auto d = doc(kRate);
        const Effect e = effect_size(d, hypothesis::run_batch(t, {d}).verdicts[0], t);
        covered += e.ci_low <= -0.2 && -0.2 <= e.ci_high;
    }
    EXPECT_GE(covered, 465u) << covered << " of 500";
}

TEST(EffectSize, MeanIntervalCoverage) {
    std::size_t covered = 0;
    for (std::uint64_t s = 0; s < 500; ++s) {
        Rng rng(derive_seed(78, s));
        std::vector<bool> g(500);
        std::vector<double> v(500);
        for (std::size_t i = 0; i < 500; ++i) {
            g[i] = i % 2 == 0;
            v[i] = g[i] ? 5.0 + 2.0 * rng.normal() : 4.0 + rng.normal();
        }
        const DataTable t({Column::boolean("g", g), Column::numeric("v", v)});
        const auto d = doc(kMean);
        const Effect e = effect_size(d, hypothesis::run_batch(t, {d}).verdicts[0], t);
        covered += e.ci_low <= 1.0 && 1.0 <= e.ci_high;
    }
    EXPECT_GE(covered, 465u) << covered << " of 500";
}

TEST(EffectSize, CorrelationUsesFisherInterval) {
    Rng rng(2);
    std::vector<double> x(200), y(200);
    for (std::size_t i = 0; i < 200; ++i) {
        x[i] = rng.normal();
        y[i] = 0.5 * x[i] + rng.normal();
    }
    const DataTable t({Column::numeric("x", x), Column::numeric("y", y)});
    const auto d = doc(R"({"id":"c","statement":"x and y","test":{"kind":"correlation","x":"x","y":"y"}})");
    const auto v = hypothesis::run_batch(t, {d}).verdicts[0];
    const Effect e = effect_size(d, v, t);
    EXPECT_EQ(e.kind, "correlation");
    const double r = v.details["r"].get<double>();
    EXPECT_NEAR(e.ci_low, std::tanh(std::atanh(r) - 1.959963984540054 / std::sqrt(197.0)), 1e-12);
    EXPECT_LT(e.ci_low, r);
    EXPECT_GT(e.ci_high, r);
}

TEST(EffectSize, ManyGroupsAreDescriptive) {
    const DataTable t = synthetic::churn(600, 1);
    const auto d = doc(R"({"id":"geo","statement":"geo","test":{"kind":"proportion_comparison","group_by":"Geography","outcome":"Exited"}})");
    const auto v = hypothesis::run_batch(t, {d}).verdicts[0];
    const Effect e = effect_size(d, v, t);
    EXPECT_FALSE(e.directional());
    EXPECT_NE(e.summary.find("France"), std::string::npos);
}

TEST(Report, EmptyVerdictsSayNoFindings) {
    const std::vector<hypothesis::HypothesisVerdict> none;
    const json r = build_report({.target = "Exited", .verdicts = &none});
    const std::string md = render_markdown(r);
    EXPECT_NE(md.find("No statistically validated findings"), std::string::npos);
    EXPECT_NE(md.find("## Model Performance"), std::string::npos);
    EXPECT_TRUE(r["recommendations"].empty());
    EXPECT_TRUE(check_integrity(r, md, none).empty());
}

TEST(Report, ChurnReportIntegrity) {
    const ChurnRun run = churn_run(2000, 1);
    const DataTable& t = run.batch.table;
    std::vector<std::size_t> a, b;
    for (std::size_t i = 0; i < t.n_rows(); ++i) (i % 5 ? a : b).push_back(i);
    model::AgentOptions o;
    o.target = "Exited";
    o.algorithms = {model::Algorithm::logistic_regression, model::Algorithm::decision_tree};
    o.folds = 3;
    const auto m = model::train_and_evaluate(t.take_rows(a), t.take_rows(b), o);
    MetadataLedger ledger;
    const json r = build_report({.target = "Exited", .docs = &run.docs, .verdicts = &run.batch.verdicts, .table = &t, .model = &m},
                                &ledger);
    const std::string md = render_markdown(r);
    const auto issues = check_integrity(r, md, run.batch.verdicts);
    EXPECT_TRUE(issues.empty()) << issues.front();
    EXPECT_EQ(render_markdown(json::parse(r.dump())), md);
    for (const char* section : {"## Key Findings", "## Model Performance", "## Recommendations", "## Monitoring"})
        EXPECT_NE(md.find(section), std::string::npos) << section;

    // ordered by adjusted p, and the planted activity effect reads as a reduction
    double last = -1;
    bool found_active = false;
    std::map<std::string, double> adjusted;
    for (const auto& v : run.batch.verdicts) adjusted[v.doc_id] = v.adjusted_p;
    for (const auto& f : r["findings"]) {
        EXPECT_GE(adjusted.at(f["id"]), last);
        last = adjusted.at(f["id"]);
        const std::string s = f["sentence"];
        if (s.find("IsActiveMember") != std::string::npos && f["effect"]["kind"] == "rate") {
            found_active = true;
            EXPECT_NE(s.find("less likely to have Exited = true"), std::string::npos) << s;
        }
    }
    EXPECT_TRUE(found_active);

    // ledger finding values equal the report's raw numbers
    std::size_t checked = 0;
    for (const auto& e : ledger.entries()) {
        if (e.action != "finding" || !e.results.count("difference")) continue;
        const std::string id = std::get<std::string>(e.params.at("hypothesis"));
        for (const auto& f : r["findings"])
            if (f["id"] == id) {
                EXPECT_EQ(std::get<double>(e.results.at("difference")), f["effect"]["difference"].get<double>());
                EXPECT_EQ(std::get<double>(e.results.at("ci_low")), f["effect"]["ci_low"].get<double>());
                ++checked;
            }
    }
    EXPECT_GT(checked, 0u);
}

TEST(Report, NoRecommendationWithoutAcceptedVerdict) {
    const ChurnRun run = churn_run(800, 4);
    for (std::uint64_t s = 0; s < 50; ++s) {
        Rng rng(s);
        auto verdicts = run.batch.verdicts;
        std::set<std::string> accepted;
        for (auto& v : verdicts) {
            v.accepted = rng.bernoulli(0.4);
            if (v.accepted && !v.error) accepted.insert(v.doc_id);
        }
        const json r = build_report({.target = "Exited", .docs = &run.docs, .verdicts = &verdicts, .table = &run.batch.table});
        EXPECT_LE(r["recommendations"].size(), accepted.size());
        for (const auto& rec : r["recommendations"]) EXPECT_TRUE(accepted.count(rec["provenance"]["hypothesis"]));
        EXPECT_EQ(r["findings"].size(), accepted.size());
        EXPECT_TRUE(check_integrity(r, render_markdown(r), verdicts).empty());
    }
}

TEST(Report, IntegrityCheckCatchesProblems) {
    const ChurnRun run = churn_run(2000, 1);
    json r = build_report({.target = "Exited", .docs = &run.docs, .verdicts = &run.batch.verdicts, .table = &run.batch.table});
    ASSERT_FALSE(r["recommendations"].empty());
    const std::string md = render_markdown(r) + "\nInvented 12.345 figure.\n";
    r["recommendations"][0]["provenance"]["hypothesis"] = "made_up";
    const auto issues = check_integrity(r, md, run.batch.verdicts);
    ASSERT_EQ(issues.size(), 2u);
    EXPECT_NE(issues[0].find("12.345"), std::string::npos);
    EXPECT_NE(issues[1].find("made_up"), std::string::npos);
}

TEST(Report, NumericTokens) {
    EXPECT_EQ(numeric_tokens("rate 20.0% vs -3.5, p = 3.1e-05 (x1)"),
              (std::vector<std::string>{"20.0", "-3.5", "3.1e-05", "1"}));
}
