#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "autods/error.hpp"
#include "autods/hypothesis/dsl.hpp"
#include "autods/rng.hpp"

using namespace autods;
using namespace autods::hypothesis;
using nlohmann::json;

namespace {

DataTable churn_like(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> products(n), tenure(n), balance(n);
    std::vector<bool> exited(n), active(n);
    std::vector<std::string> geo(n);
    const char* countries[] = {"France", "Germany", "Spain"};
    for (std::size_t i = 0; i < n; ++i) {
        products[i] = static_cast<double>(1 + rng.index(4));
        tenure[i] = static_cast<double>(rng.index(11));
        balance[i] = rng.normal() * 1000.0 + 5000.0;
        active[i] = rng.bernoulli(0.5);
        exited[i] = rng.bernoulli(products[i] < 2 ? 0.35 : 0.15);
        geo[i] = countries[rng.index(3)];
    }
    return DataTable({Column::numeric("NumOfProducts", products), Column::numeric("Tenure", tenure),
                      Column::numeric("Balance", balance), Column::boolean("IsActiveMember", active),
                      Column::boolean("Exited", exited), Column::categorical("Geography", geo)});
}

std::vector<std::string> issues_of(const std::string& text, const DataTable* schema = nullptr) {
    try {
        parse_hypothesis(text, schema);
    } catch (const ValidationError& e) {
        return e.issues();
    }
    return {};
}

bool any_contains(const std::vector<std::string>& issues, const std::string& needle) {
    return std::any_of(issues.begin(), issues.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

const char* kChurnDoc = R"({
  "id": "few_products",
  "statement": "Customers with fewer than two products exit more often",
  "test": {"kind": "proportion_comparison", "group_by": "NumOfProducts < 2", "outcome": "Exited"},
  "indicator": "NumOfProducts < 2"
})";

// ------------------------------------------------------------------ expressions

TEST(Expr, TenureBelowThree) {
    const DataTable t({Column::numeric("Tenure", {1, 5, 2})});
    const Mask m = eval_condition(parse_expr("Tenure < 3"), t);
    EXPECT_EQ(m.value, (std::vector<std::uint8_t>{1, 0, 1}));
    EXPECT_EQ(m.missing, (std::vector<std::uint8_t>{0, 0, 0}));
}

TEST(Expr, MissingCellIsExcludedNotFalse) {
    const DataTable t({Column::numeric("x", {0.5, 2.0, 0.0}, {0, 0, 1})});
    for (const char* text : {"x < 1", "not (x < 1)"}) {
        const Mask m = eval_condition(parse_expr(text), t);
        EXPECT_TRUE(m.missing[2]) << text;
        EXPECT_FALSE(m.is_true(2)) << text;
        EXPECT_FALSE(m.is_false(2)) << text;
    }
}

TEST(Expr, NegationIsComplementOnPresentRows) {
    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 40;
        std::vector<double> x(n);
        std::vector<std::uint8_t> miss(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.uniform(-2.0, 2.0);
            miss[i] = rng.bernoulli(0.2);
        }
        const DataTable t({Column::numeric("x", x, miss)});
        const Mask a = eval_condition(parse_expr("x < 1"), t);
        const Mask b = eval_condition(parse_expr("not (x < 1)"), t);
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_EQ(a.missing[i], b.missing[i]);
            if (!a.missing[i]) EXPECT_NE(a.value[i], b.value[i]);
        }
    }
}

TEST(Expr, KleeneConnectives) {
    const DataTable t({Column::numeric("x", {0, 0}, {1, 1}), Column::numeric("y", {5, 0})});
    const Mask conj = eval_condition(parse_expr("x > 1 and y > 1"), t);
    EXPECT_TRUE(conj.missing[0]);   // missing and true
    EXPECT_TRUE(conj.is_false(1));  // missing and false
    const Mask disj = eval_condition(parse_expr("x > 1 or y > 1"), t);
    EXPECT_TRUE(disj.is_true(0));   // missing or true
    EXPECT_TRUE(disj.missing[1]);   // missing or false
}

TEST(Expr, OperatorSpellings) {
    const DataTable t({Column::numeric("a", {1, 2, 3}), Column::categorical("g", {"x", "y", "x"}),
                       Column::boolean("b", {true, false, true})});
    const std::vector<std::uint8_t> le2{1, 1, 0};
    EXPECT_EQ(eval_condition(parse_expr("a <= 2"), t).value, le2);
    EXPECT_EQ(eval_condition(parse_expr("a ≤ 2"), t).value, le2);
    EXPECT_EQ(eval_condition(parse_expr("a ≥ 2"), t).value, (std::vector<std::uint8_t>{0, 1, 1}));
    EXPECT_EQ(eval_condition(parse_expr("a <> 2"), t).value, (std::vector<std::uint8_t>{1, 0, 1}));
    EXPECT_EQ(eval_condition(parse_expr("a ≠ 2"), t).value, (std::vector<std::uint8_t>{1, 0, 1}));
    EXPECT_EQ(eval_condition(parse_expr("a == 2 || a = 3"), t).value, (std::vector<std::uint8_t>{0, 1, 1}));
    EXPECT_EQ(eval_condition(parse_expr("g = 'x' AND !b"), t).value, (std::vector<std::uint8_t>{0, 0, 0}));
    EXPECT_EQ(eval_condition(parse_expr("g = \"x\" and b"), t).value, (std::vector<std::uint8_t>{1, 0, 1}));
    EXPECT_EQ(eval_condition(parse_expr("`a` > -1.5e0"), t).value, (std::vector<std::uint8_t>{1, 1, 1}));
    EXPECT_EQ(eval_condition(parse_expr("b = true"), t).value, (std::vector<std::uint8_t>{1, 0, 1}));
    EXPECT_EQ(eval_condition(parse_expr("3 > a"), t).value, (std::vector<std::uint8_t>{1, 1, 0}));
}

TEST(Expr, DatetimeAgainstIsoString) {
    const auto d1 = *parse_iso8601("2024-01-01");
    const auto d2 = *parse_iso8601("2024-06-01");
    const DataTable t({Column::datetime("when", {d1, d2}, {"2024-01-01", "2024-06-01"})});
    EXPECT_EQ(eval_condition(parse_expr("when >= '2024-03-01'"), t).value, (std::vector<std::uint8_t>{0, 1}));
    EXPECT_FALSE(typecheck(parse_expr("when > 'soon'"), t).empty());
}

TEST(Expr, MalformedInputsAreRejected) {
    for (const char* bad : {"", "x <", "(x < 1", "x < 1)", "x < 1 < 2", "x <# 1", "'open", "and x", "x < 1 y"}) {
        EXPECT_THROW(parse_expr(bad), ValidationError) << bad;
    }
}

TEST(Expr, TypeMismatches) {
    const DataTable t({Column::numeric("n", {1, 2}), Column::categorical("c", {"a", "b"})});
    EXPECT_TRUE(any_contains(typecheck(parse_expr("c < 'b'"), t), "ordering comparison"));
    EXPECT_TRUE(any_contains(typecheck(parse_expr("n = 'a'"), t), "numeric column 'n'"));
    EXPECT_TRUE(any_contains(typecheck(parse_expr("n"), t), "not boolean"));
    EXPECT_TRUE(any_contains(typecheck(parse_expr("ghost > 1"), t), "unknown column 'ghost'"));
    EXPECT_TRUE(any_contains(typecheck(parse_expr("1 < 2"), t), "two literals"));
    EXPECT_THROW(eval_condition(parse_expr("c < 'b'"), t), ValidationError);
}

Expr random_expr(Rng& rng, int depth) {
    static const std::vector<std::string> names{"x", "Tenure", "has.dot", "my col", "and", "_u1"};
    const double r = rng.uniform();
    if (depth <= 0 || r < 0.35) {
        Expr lhs = Expr::column(names[rng.index(names.size())]);
        Expr rhs;
        switch (rng.index(4)) {
            case 0: rhs = Expr::literal(rng.normal() * std::pow(10.0, static_cast<double>(rng.index(7)) - 3.0)); break;
            case 1: rhs = Expr::literal(std::string(rng.bernoulli(0.5) ? "it's" : "a\\b \"q\"")); break;
            case 2: rhs = Expr::literal(rng.bernoulli(0.5)); break;
            default: rhs = Expr::column(names[rng.index(names.size())]); break;
        }
        if (rng.bernoulli(0.1)) return Expr::column(names[rng.index(names.size())]);
        return Expr::compare(static_cast<Comparator>(rng.index(6)), std::move(lhs), std::move(rhs));
    }
    if (r < 0.55) return Expr::negate(random_expr(rng, depth - 1));
    std::vector<Expr> args;
    const std::size_t k = 2 + rng.index(3);
    for (std::size_t i = 0; i < k; ++i) args.push_back(random_expr(rng, depth - 1));
    return r < 0.8 ? Expr::all(std::move(args)) : Expr::any(std::move(args));
}

TEST(Expr, PrintParseRoundTripProperty) {
    Rng rng(11);
    for (int rep = 0; rep < 2000; ++rep) {
        const Expr e = random_expr(rng, 4);
        const std::string text = to_string(e);
        ASSERT_EQ(parse_expr(text), e) << text;
    }
}

TEST(Expr, ReferencedColumnsInFirstUseOrder) {
    EXPECT_EQ(referenced_columns(parse_expr("b > 1 and (a < 2 or b = 3)")), (std::vector<std::string>{"b", "a"}));
}

// ------------------------------------------------------------------ documents

TEST(Doc, ChurnProportionDocIsValid) {
    const DataTable t = churn_like(200, 1);
    const HypothesisDoc d = parse_hypothesis(kChurnDoc, &t);
    EXPECT_EQ(d.id, "few_products");
    EXPECT_EQ(d.test.kind, TestKind::proportion_comparison);
    EXPECT_DOUBLE_EQ(d.alpha, 0.05);
    const Binding* g = d.test.binding("group_by");
    ASSERT_NE(g, nullptr);
    ASSERT_TRUE(g->condition.has_value());
    EXPECT_EQ(to_string(*g->condition), "NumOfProducts < 2");
    EXPECT_EQ(d.test.binding("outcome")->column, "Exited");
    ASSERT_TRUE(d.indicator.has_value());
}

TEST(Doc, UnknownKind) {
    const auto issues = issues_of(R"({"id":"h","statement":"s","test":{"kind":"magic_test"}})");
    EXPECT_TRUE(any_contains(issues, "unknown test kind"));
}

TEST(Doc, NonexistentColumnIsNamed) {
    const DataTable t = churn_like(50, 1);
    const auto issues = issues_of(
        R"({"id":"h","statement":"s","test":{"kind":"mean_comparison","group_by":"IsActiveMember","value":"NoSuchColumn"}})", &t);
    ASSERT_FALSE(issues.empty());
    EXPECT_TRUE(any_contains(issues, "NoSuchColumn"));
}

TEST(Doc, EveryViolationIsReported) {
    const auto issues = issues_of(R"({"id":"bad id","statement":"","alpha":1.5,"extra":1,"indicator":"x <",
        "test":{"kind":"mean_comparison","value":"v","bogus":"q","params":{"variant":"odd","nope":2}}})");
    for (const char* needle : {"id 'bad id'", "statement", "alpha", "unknown field 'extra'", "indicator", "missing binding 'group_by'",
                               "unknown binding 'bogus'", "param 'variant'", "unknown param 'nope'"}) {
        EXPECT_TRUE(any_contains(issues, needle)) << needle;
    }
}

TEST(Doc, TypeMismatchAgainstSchema) {
    const DataTable t = churn_like(50, 1);
    const auto issues = issues_of(
        R"({"id":"h","statement":"s","test":{"kind":"mean_comparison","group_by":"IsActiveMember","value":"Geography"}})", &t);
    EXPECT_TRUE(any_contains(issues, "'Geography' is categorical"));
}

TEST(Doc, InvalidJson) {
    EXPECT_TRUE(any_contains(issues_of("{not json"), "invalid JSON"));
    EXPECT_TRUE(any_contains(issues_of("[1]"), "JSON object"));
}

TEST(Doc, BatchRejectsDuplicateIdsAndAcceptsWrapper) {
    const std::string one = R"({"id":"a","statement":"s","test":{"kind":"normality","value":"Tenure"}})";
    EXPECT_EQ(parse_batch("[" + one + "]").size(), 1u);
    EXPECT_EQ(parse_batch(R"({"hypotheses":[)" + one + "]}").size(), 1u);
    try {
        parse_batch("[" + one + "," + one + "]");
        FAIL() << "duplicate id accepted";
    } catch (const ValidationError& e) {
        EXPECT_TRUE(any_contains(e.issues(), "duplicate id 'a'"));
        EXPECT_TRUE(any_contains(e.issues(), "hypothesis 1 (a)"));
    }
}

TEST(Doc, ParamDefaultsComeFromCatalog) {
    const HypothesisDoc d = parse_hypothesis(R"({"id":"c","statement":"s","test":{"kind":"clustering","columns":["a","b"]}})");
    EXPECT_EQ(d.test.param("k").get<int>(), 3);
    EXPECT_DOUBLE_EQ(d.test.param("stability").get<double>(), 0.8);
    EXPECT_TRUE(d.test.params.empty());
    EXPECT_THROW(d.test.param("nothing"), Error);
}

TEST(Doc, CatalogListsEveryKind) {
    const json c = catalog_json();
    EXPECT_EQ(c.size(), all_test_kinds().size());
    for (TestKind k : all_test_kinds()) EXPECT_EQ(parse_test_kind(to_string(k)), k);
}

json random_binding(Rng& rng, const std::string& expects) {
    static const std::vector<std::string> cols{"a", "b c", "Tenure", "x.y"};
    if (expects == "list of numeric columns") {
        json arr = json::array();
        const std::size_t k = 2 + rng.index(3);
        for (std::size_t i = 0; i < k; ++i) arr.push_back(cols[i]);
        return arr;
    }
    if (expects == "condition or grouping column") {
        if (rng.bernoulli(0.3)) return to_string(Expr::column(cols[rng.index(cols.size())]));
        return to_string(random_expr(rng, 2));
    }
    return cols[rng.index(cols.size())];
}

json random_doc_json(Rng& rng, int n) {
    const json catalog = catalog_json();
    const json& kind = catalog[rng.index(catalog.size())];
    json test = {{"kind", kind["kind"]}};
    for (const auto& b : kind["bindings"]) {
        if (b["required"].get<bool>() || rng.bernoulli(0.5)) {
            test[b["name"].get<std::string>()] = random_binding(rng, b["expects"].get<std::string>());
        }
    }
    json params = json::object();
    for (const auto& [name, p] : kind["params"].items()) {
        if (rng.bernoulli(0.5)) params[name] = p["default"];
    }
    if (!params.empty()) test["params"] = params;
    json doc = {{"id", "h" + std::to_string(n)}, {"statement", "statement " + std::to_string(n)}, {"test", test}};
    if (rng.bernoulli(0.5)) doc["alpha"] = rng.uniform(0.001, 0.2);
    if (rng.bernoulli(0.5)) doc["indicator"] = to_string(random_expr(rng, 3));
    return doc;
}

TEST(Doc, SerializeParseRoundTripProperty) {
    Rng rng(17);
    for (int rep = 0; rep < 1000; ++rep) {
        const HypothesisDoc d = doc_from_json(random_doc_json(rng, rep));
        const std::string text = serialize(d);
        ASSERT_EQ(parse_hypothesis(text), d) << text;
    }
}

// ------------------------------------------------------------------ compile

HypothesisDoc doc(const std::string& text) { return parse_hypothesis(text); }

TEST(Compile, MeanComparisonMapsToTTest) {
    const DataTable t = churn_like(200, 2);
    const auto exe = compile(doc(R"({"id":"m","statement":"s","test":{"kind":"mean_comparison","group_by":"IsActiveMember","value":"Balance"}})"), t);
    EXPECT_EQ(exe.operation, "t_test");
    EXPECT_EQ(exe.columns, (std::vector<std::string>{"IsActiveMember", "Balance"}));

    std::vector<double> a, b;
    const Column& g = t.column("IsActiveMember");
    for (std::size_t i = 0; i < t.n_rows(); ++i) (g.truth(i) ? a : b).push_back(t.column("Balance").number(i));
    const auto direct = stats::t_test(a, b);
    const auto out = exe.run(t, 0);
    EXPECT_DOUBLE_EQ(out.result.p_value, direct.p_value);
    EXPECT_DOUBLE_EQ(out.result.statistic, direct.statistic);
    EXPECT_DOUBLE_EQ(out.details["mean_difference"].get<double>(), stats::mean(a) - stats::mean(b));
}

TEST(Compile, CorrelationMapsToPearson) {
    const DataTable t = churn_like(100, 2);
    const auto exe = compile(doc(R"({"id":"c","statement":"s","test":{"kind":"correlation","x":"Tenure","y":"Balance"}})"), t);
    EXPECT_EQ(exe.operation, "pearson_test");
}

TEST(Compile, AnovaWithOneLevelFails) {
    const DataTable t({Column::categorical("g", {"a", "a", "a", "a"}), Column::numeric("v", {1, 2, 3, 4})});
    EXPECT_THROW(compile(doc(R"({"id":"a","statement":"s","test":{"kind":"anova","group_by":"g","value":"v"}})"), t),
                 ValidationError);
}

TEST(Compile, TTestOnCategoricalFails) {
    const DataTable t = churn_like(50, 2);
    EXPECT_THROW(compile(doc(R"({"id":"m","statement":"s","test":{"kind":"mean_comparison","group_by":"IsActiveMember","value":"Geography"}})"), t),
                 ValidationError);
}

TEST(Compile, TwoGroupKindsRejectThreeLevels) {
    const DataTable t = churn_like(60, 2);
    try {
        compile(doc(R"({"id":"m","statement":"s","test":{"kind":"mean_comparison","group_by":"Geography","value":"Balance"}})"), t);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_TRUE(any_contains(e.issues(), "needs 2 group levels, found 3"));
    }
}

TEST(Compile, NumericGroupingNeedsFewLevels) {
    const DataTable t = churn_like(200, 2);
    EXPECT_THROW(compile(doc(R"({"id":"m","statement":"s","test":{"kind":"anova","group_by":"Balance","value":"Tenure"}})"), t),
                 ValidationError);
    EXPECT_NO_THROW(compile(doc(R"({"id":"m","statement":"s","test":{"kind":"anova","group_by":"NumOfProducts","value":"Tenure"}})"), t));
}

TEST(Compile, ProportionMatchesHandYatesOracle) {
    // 2x2: group true 30/100 exited, group false 45/100
    std::vector<double> g, y;
    for (int i = 0; i < 200; ++i) {
        g.push_back(i < 100 ? 1 : 5);
        y.push_back(i < 100 ? (i < 30 ? 1 : 0) : (i < 145 ? 1 : 0));
    }
    const DataTable t({Column::numeric("g", g), Column::numeric("y", y)});
    const auto out = compile(doc(R"({"id":"p","statement":"s","test":{"kind":"proportion_comparison","group_by":"g < 2","outcome":"y"}})"), t).run(t, 0);
    const double a = 70, b = 30, c = 55, d = 45, n = 200;  // rows: group, cols: y=0, y=1
    const double chi = n * std::pow(std::abs(a * d - b * c) - n / 2, 2) / ((a + b) * (c + d) * (a + c) * (b + d));
    EXPECT_NEAR(out.result.statistic, chi, 1e-10);
    EXPECT_NEAR(out.result.p_value, std::erfc(std::sqrt(chi / 2)), 1e-10);
    EXPECT_DOUBLE_EQ(out.details["rates"]["true"].get<double>(), 0.30);
    EXPECT_DOUBLE_EQ(out.details["rates"]["false"].get<double>(), 0.45);
    EXPECT_NEAR(out.details["rate_difference"].get<double>(), -0.15, 1e-12);
}

TEST(Compile, MissingRowsAreExcludedAndCounted) {
    const DataTable t({Column::numeric("g", {0, 0, 0, 1, 1, 1, 0}, {0, 0, 0, 0, 0, 0, 1}),
                       Column::numeric("v", {1, 2, 3, 7, 8, 9, 4}, {0, 0, 0, 0, 0, 1, 0})});
    const auto out = compile(doc(R"({"id":"m","statement":"s","test":{"kind":"mean_comparison","group_by":"g = 1","value":"v"}})"), t).run(t, 0);
    EXPECT_EQ(out.result.n_excluded, 2u);
    EXPECT_DOUBLE_EQ(out.details["means"]["true"].get<double>(), 7.5);
    EXPECT_DOUBLE_EQ(out.details["means"]["false"].get<double>(), 2.0);
}

TEST(Compile, GroupSplits) {
    const DataTable t({Column::boolean("b", {false, true, true}), Column::categorical("c", {"z", "a", "m"})});
    const GroupSplit bs = split_groups(Binding::of_column("b"), t);
    EXPECT_EQ(bs.labels, (std::vector<std::string>{"true", "false"}));
    EXPECT_EQ(bs.group, (std::vector<int>{1, 0, 0}));
    const GroupSplit cs = split_groups(Binding::of_column("c"), t);
    EXPECT_EQ(cs.labels, (std::vector<std::string>{"a", "m", "z"}));
    EXPECT_EQ(cs.group, (std::vector<int>{2, 0, 1}));
}

TEST(Compile, OutlierScanAttachesFlagColumn) {
    const DataTable t({Column::numeric("v", {1, 2, 3, 2, 1, 2, 3, 100}, {0, 0, 0, 0, 0, 0, 0, 0})});
    const auto exe = compile(doc(R"({"id":"o","statement":"s","test":{"kind":"outlier_scan","columns":["v"]}})"), t);
    EXPECT_EQ(exe.operation, "outliers_iqr");
    const auto out = exe.run(t, 0);
    ASSERT_TRUE(out.criterion.has_value());
    EXPECT_TRUE(*out.criterion);
    ASSERT_EQ(out.attachments.size(), 1u);
    EXPECT_EQ(out.attachments[0].name(), "hyp_o");
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(out.attachments[0].truth(i), i == 7);
}

TEST(Compile, ClusteringOnSeparatedBlobs) {
    Rng rng(5);
    std::vector<double> x, y;
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 40; ++i) {
            x.push_back(c * 10.0 + rng.normal() * 0.3);
            y.push_back((c % 2) * 10.0 + rng.normal() * 0.3);
        }
    }
    const DataTable t({Column::numeric("x", x), Column::numeric("y", y)});
    const auto out = compile(doc(R"({"id":"k","statement":"s","test":{"kind":"clustering","columns":["x","y"]}})"), t).run(t, 9);
    EXPECT_TRUE(out.criterion.value());
    EXPECT_GE(out.result.statistic, 0.8);
    ASSERT_EQ(out.attachments.size(), 1u);
    EXPECT_EQ(out.attachments[0].name(), "hyp_k_cluster_id");
}

TEST(Compile, FuzzedValidDocsCompileOrFailTyped) {
    Rng data(23);
    const std::size_t n = 60;
    std::vector<double> a(n), bc(n), tenure(n), xy(n);
    std::vector<std::uint8_t> miss(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = data.normal();
        bc[i] = static_cast<double>(data.index(3));
        tenure[i] = static_cast<double>(i % 2);
        xy[i] = data.uniform();
        miss[i] = data.bernoulli(0.1);
    }
    const DataTable t({Column::numeric("a", a, miss), Column::numeric("b c", bc), Column::numeric("Tenure", tenure),
                       Column::numeric("x.y", xy), Column::boolean("x", std::vector<bool>(n, true)),
                       Column::categorical("_u1", std::vector<std::string>(n, "k"))});
    Rng rng(29);
    int compiled = 0, ran = 0;
    for (int rep = 0; rep < 400; ++rep) {
        const HypothesisDoc d = doc_from_json(random_doc_json(rng, rep));
        try {
            const auto exe = compile(d, t);
            ++compiled;
            try {
                exe.run(t, static_cast<std::uint64_t>(rep));
                ++ran;
            } catch (const Error&) {
            }
        } catch (const Error&) {
        }
    }
    EXPECT_GT(compiled, 0);
    EXPECT_GT(ran, 0);
}

}  // namespace
