#include <gtest/gtest.h>

#include "autods/error.hpp"
#include "autods/hypothesis/engine.hpp"
#include "autods/proposer.hpp"
#include "autods/synthetic.hpp"
#include "stub_llm.hpp"

using namespace autods;
using namespace autods::proposer;
using hypothesis::TestKind;
using nlohmann::json;
using autods::testing::StubLlm;

namespace {

const char* kValidDoc =
    R"({"id":"active","statement":"Active members churn less","test":{"kind":"proportion_comparison","group_by":"IsActiveMember","outcome":"Exited"},"indicator":"IsActiveMember"})";

ProposalBudget budget_for(const std::string& model, Price p) {
    ProposalBudget b;
    b.prices[model] = p;
    return b;
}

// ------------------------------------------------------------------ templates

bool same_mask(const hypothesis::Mask& a, const hypothesis::Mask& b) { return a.value == b.value && a.missing == b.missing; }

TEST(Templates, ChurnSchemaCoversTheCaseStudyHypotheses) {
    const DataTable t = synthetic::churn(2000, 1);
    const auto docs = enumerate_templates(summarize(t), "Exited");
    const auto active = hypothesis::eval_condition(hypothesis::parse_expr("IsActiveMember"), t);
    const auto short_tenure = hypothesis::eval_condition(hypothesis::parse_expr("Tenure < 3"), t);
    const auto few_products = hypothesis::eval_condition(hypothesis::parse_expr("NumOfProducts < 2"), t);
    bool has_active = false, has_tenure = false, has_products = false;
    for (const auto& d : docs) {
        if (d.test.kind != TestKind::proportion_comparison || !d.indicator) continue;
        EXPECT_EQ(d.test.binding("outcome")->column, "Exited");
        const auto m = hypothesis::eval_condition(*d.indicator, t);
        has_active |= same_mask(m, active);
        has_tenure |= same_mask(m, short_tenure);
        has_products |= same_mask(m, few_products);
    }
    EXPECT_TRUE(has_active);
    EXPECT_TRUE(has_tenure);
    EXPECT_TRUE(has_products);
}

TEST(Templates, SingleColumnTableGivesNothing) {
    const DataTable t({Column::boolean("y", {true, false, true})});
    EXPECT_TRUE(enumerate_templates(summarize(t), "y").empty());
}

TEST(Templates, LimitIsExactAndStable) {
    const DataTable t = synthetic::churn(500, 2);
    const auto a = enumerate_templates(summarize(t), "Exited", 5);
    const auto b = enumerate_templates(summarize(t), "Exited", 5);
    ASSERT_EQ(a.size(), 5u);
    EXPECT_EQ(a, b);
    const auto all = enumerate_templates(summarize(t), "Exited", 1000);
    ASSERT_GT(all.size(), 5u);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), all.begin()));
}

TEST(Templates, EveryDocCompilesAgainstItsTable) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const DataTable churn = synthetic::churn(300, s);
        const DataTable inter = synthetic::interaction(300, s);
        const DataTable reg = inter.without_columns({"y"}).with_column(inter.column("x1").renamed("target"));
        for (const auto& [table, target] : {std::pair{&churn, "Exited"}, std::pair{&inter, "y"}, std::pair{&reg, "target"}}) {
            const auto docs = enumerate_templates(summarize(*table), target, 1000);
            EXPECT_FALSE(docs.empty());
            for (const auto& d : docs) {
                EXPECT_NO_THROW(hypothesis::compile(d, *table)) << hypothesis::serialize(d);
                EXPECT_EQ(hypothesis::parse_hypothesis(hypothesis::serialize(d)), d);
            }
        }
    }
}

TEST(Templates, RegressionTargetUsesCorrelation) {
    const DataTable t({Column::numeric("a", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}),
                       Column::numeric("y", {2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11.5})});
    const auto docs = enumerate_templates(summarize(t), "y");
    ASSERT_EQ(docs.size(), 1u);
    EXPECT_EQ(docs[0].test.kind, TestKind::correlation);
}

TEST(Templates, UnknownTargetIsAConfigError) {
    const DataTable t = synthetic::churn(50, 1);
    try {
        enumerate_templates(summarize(t), "Nope");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
    }
}

// ------------------------------------------------------------------ accounting

TEST(Cost, HandArithmetic) {
    EXPECT_DOUBLE_EQ(exchange_cost(1000, 500, {0.005, 0.015}), 0.0125);
    EXPECT_DOUBLE_EQ(exchange_cost(0, 0, {0.005, 0.015}), 0.0);
}

TEST(Cost, BudgetValidation) {
    ProposalBudget b;
    b.max_tokens = 0;
    EXPECT_THROW(b.validate(), Error);
    ProposalBudget c;
    c.prices["m"] = {-1.0, 0.0};
    EXPECT_THROW(c.validate(), Error);
}

// ------------------------------------------------------------------ llm

TEST(Llm, FixedValidDoc) {
    StubLlm stub({{std::string("[") + kValidDoc + "]", 1000, 500}});
    const DataTable t = synthetic::churn(100, 1);
    const auto p = llm_propose(summarize(t), "Exited", budget_for("stub-model", {0.005, 0.015}), stub.endpoint());
    ASSERT_EQ(p.docs.size(), 1u);
    EXPECT_EQ(p.docs[0].id, "active");
    ASSERT_EQ(p.exchanges.size(), 1u);
    EXPECT_TRUE(p.exchanges[0].ok);
    EXPECT_EQ(p.exchanges[0].input_tokens, 1000u);
    EXPECT_EQ(p.exchanges[0].output_tokens, 500u);
    EXPECT_DOUBLE_EQ(p.exchanges[0].cost, 0.0125);
    EXPECT_DOUBLE_EQ(p.total_cost, 0.0125);
    EXPECT_EQ(stub.auth()[0], "Bearer secret");
    const json req = stub.requests()[0];
    EXPECT_EQ(req["model"], "stub-model");
    const std::string prompt = req["messages"][1]["content"].get<std::string>();
    EXPECT_NE(prompt.find("proportion_comparison"), std::string::npos);
    EXPECT_NE(prompt.find("\"name\":\"Tenure\""), std::string::npos);
}

TEST(Llm, MalformedTwiceGivesNothing) {
    StubLlm stub({{"not json at all", 100, 10}, {"{still broken", 120, 12}});
    const DataTable t = synthetic::churn(100, 1);
    const auto p = llm_propose(summarize(t), "Exited", budget_for("stub-model", {0.001, 0.002}), stub.endpoint());
    EXPECT_TRUE(p.docs.empty());
    ASSERT_EQ(p.exchanges.size(), 2u);
    for (const auto& e : p.exchanges) {
        EXPECT_FALSE(e.ok);
        EXPECT_FALSE(e.reasons.empty());
    }
    EXPECT_TRUE(p.exchanges[1].repair);
    const auto repair_msgs = stub.requests()[1]["messages"];
    EXPECT_EQ(repair_msgs.size(), 4u);
    EXPECT_NE(repair_msgs[3]["content"].get<std::string>().find("not valid JSON"), std::string::npos);
}

TEST(Llm, RepairRoundRecoversInvalidDoc) {
    const std::string bad = R"([{"id":"x","statement":"s","test":{"kind":"mean_comparison","group_by":"IsActiveMember","value":"Ghost"}}])";
    StubLlm stub({{bad, 200, 40}, {std::string("```json\n[") + kValidDoc + "]\n```", 300, 60}});
    const DataTable t = synthetic::churn(100, 1);
    const auto p = llm_propose(summarize(t), "Exited", budget_for("stub-model", {0.01, 0.03}), stub.endpoint());
    ASSERT_EQ(p.docs.size(), 1u);
    ASSERT_EQ(p.exchanges.size(), 2u);
    EXPECT_FALSE(p.exchanges[0].ok);
    EXPECT_TRUE(std::any_of(p.exchanges[0].reasons.begin(), p.exchanges[0].reasons.end(),
                            [](const std::string& r) { return r.find("Ghost") != std::string::npos; }));
    EXPECT_TRUE(p.exchanges[1].ok);
    EXPECT_EQ(p.total_cost, p.exchanges[0].cost + p.exchanges[1].cost);
    EXPECT_DOUBLE_EQ(p.total_cost, 200 * 0.01 / 1000 + 40 * 0.03 / 1000 + 300 * 0.01 / 1000 + 60 * 0.03 / 1000);
}

TEST(Llm, CallBudgetStopsRepair) {
    StubLlm stub({{"garbage", 10, 10}, {std::string("[") + kValidDoc + "]", 10, 10}});
    const DataTable t = synthetic::churn(100, 1);
    ProposalBudget b = budget_for("stub-model", {0.001, 0.001});
    b.max_llm_calls = 1;
    const auto p = llm_propose(summarize(t), "Exited", b, stub.endpoint());
    EXPECT_TRUE(p.budget_exhausted);
    EXPECT_EQ(p.exchanges.size(), 1u);
    EXPECT_EQ(stub.requests().size(), 1u);
}

TEST(Llm, TokenBudgetHaltsBeforeCalling) {
    StubLlm stub({{std::string("[") + kValidDoc + "]", 10, 10}});
    const DataTable t = synthetic::churn(100, 1);
    ProposalBudget b = budget_for("stub-model", {0.001, 0.001});
    b.max_tokens = 50;  // the prompt alone is larger
    const auto p = llm_propose(summarize(t), "Exited", b, stub.endpoint());
    EXPECT_TRUE(p.budget_exhausted);
    EXPECT_TRUE(p.exchanges.empty());
    EXPECT_TRUE(stub.requests().empty());
}

TEST(Llm, OverspendingReplyIsDiscarded) {
    StubLlm stub({{std::string("[") + kValidDoc + "]", 9000, 9000}});
    const DataTable t = synthetic::churn(100, 1);
    ProposalBudget b = budget_for("stub-model", {0.001, 0.001});
    b.max_tokens = 10000;
    const auto p = llm_propose(summarize(t), "Exited", b, stub.endpoint());
    EXPECT_TRUE(p.budget_exhausted);
    EXPECT_TRUE(p.docs.empty());
    ASSERT_EQ(p.exchanges.size(), 1u);
    EXPECT_DOUBLE_EQ(p.total_cost, 0.018);
}

TEST(Llm, HttpFailureIsTransportError) {
    StubLlm stub({{"", 0, 0, 503}});
    const DataTable t = synthetic::churn(100, 1);
    try {
        llm_propose(summarize(t), "Exited", budget_for("stub-model", {0, 0}), stub.endpoint());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::transport);
    }
    LlmEndpoint closed{"http://127.0.0.1:1/v1/chat/completions", "stub-model", "", 2.0};
    try {
        llm_propose(summarize(t), "Exited", budget_for("stub-model", {0, 0}), closed);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::transport);
    }
}

TEST(Llm, MissingPriceIsConfigError) {
    const DataTable t = synthetic::churn(50, 1);
    LlmEndpoint ep{"http://127.0.0.1:1/x", "unpriced", "", 1.0};
    try {
        llm_propose(summarize(t), "Exited", budget_for("other", {0, 0}), ep);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
    }
}

TEST(Llm, ExchangeLogRoundTrip) {
    LlmExchange e{"m", "p", "r", 3, 4, 0.5, false, {"a", "b"}, true};
    const std::string line = to_jsonl({e});
    EXPECT_EQ(line.back(), '\n');
    EXPECT_EQ(exchange_from_json(json::parse(line)), e);
    EXPECT_EQ(json::parse(line)["parse_outcome"], "rejected");
}

TEST(Reply, ShapesAndDuplicates) {
    const DataTable t = synthetic::churn(50, 1);
    const auto check = schema_validator(summarize(t));
    EXPECT_EQ(parse_reply(kValidDoc, check).docs.size(), 1u);
    EXPECT_EQ(parse_reply(std::string(R"({"hypotheses":[)") + kValidDoc + "]}", check).docs.size(), 1u);
    EXPECT_EQ(parse_reply(std::string("Here you go:\n[") + kValidDoc + "]\nThanks", check).docs.size(), 1u);
    const auto dup = parse_reply(std::string("[") + kValidDoc + "," + kValidDoc + "]", check);
    EXPECT_EQ(dup.docs.size(), 1u);
    ASSERT_EQ(dup.issues.size(), 1u);
    EXPECT_NE(dup.issues[0].find("duplicate id"), std::string::npos);
}

}  // namespace
