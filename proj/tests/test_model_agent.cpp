#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "autods/error.hpp"
#include "autods/model/agent.hpp"
#include "autods/rng.hpp"
#include "autods/synthetic.hpp"

using namespace autods;
using namespace autods::model;

namespace {

std::pair<DataTable, DataTable> split(const DataTable& t, std::size_t n_train) {
    std::vector<std::size_t> a, b;
    for (std::size_t i = 0; i < t.n_rows(); ++i) (i < n_train ? a : b).push_back(i);
    return {t.take_rows(a), t.take_rows(b)};
}

AgentOptions quick(std::string target) {
    AgentOptions o;
    o.target = std::move(target);
    o.algorithms = {Algorithm::logistic_regression, Algorithm::decision_tree, Algorithm::knn};
    o.folds = 3;
    o.seed = 11;
    return o;
}

DataTable linear(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> a(n), b(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng.normal();
        b[i] = rng.normal();
        y[i] = 3 * a[i] - 2 * b[i] + 0.1 * rng.normal();
    }
    return DataTable({Column::numeric("a", a), Column::numeric("b", b), Column::numeric("y", y)});
}

}  // namespace

TEST(Design, FillsWithTrainMedianAndSkipsText) {
    const DataTable train({Column::numeric("x", {1, 0, 3, 10}, {0, 1, 0, 0}), Column::categorical("c", {"a", "b", "a", "b"}),
                           Column::boolean("f", {true, false, true, true}), Column::numeric("drop", {1, 2, 3, 4}),
                           Column::boolean("y", {false, true, false, true})});
    const Design d = make_design(train, "y", Task::classification, {"drop"});
    EXPECT_EQ(d.features, (std::vector<std::string>{"x", "f"}));
    EXPECT_DOUBLE_EQ(d.fill[0], 3.0);  // median of 1, 3, 10
    EXPECT_DOUBLE_EQ(d.fill[1], 1.0);
    EXPECT_EQ(d.labels, (std::vector<std::string>{"false", "true"}));
    EXPECT_DOUBLE_EQ(d.positive_label, 1.0);

    const DataTable test({Column::numeric("x", {0, 7}, {1, 0}), Column::boolean("f", {false, true}),
                          Column::boolean("y", {true, false})});
    const Matrix m = d.matrix(test);
    EXPECT_DOUBLE_EQ(m(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(m(1, 0), 7.0);
    EXPECT_DOUBLE_EQ(m(0, 1), 0.0);
    EXPECT_EQ(d.target_values(test), (std::vector<double>{1, 0}));
}

TEST(Design, CategoricalTargetEncodesSortedLabels) {
    const DataTable t({Column::numeric("x", {1, 2, 3, 4}), Column::categorical("y", {"stay", "leave", "stay", "leave"})});
    const Design d = make_design(t, "y", Task::classification);
    EXPECT_EQ(d.labels, (std::vector<std::string>{"leave", "stay"}));
    EXPECT_EQ(d.target_values(t), (std::vector<double>{1, 0, 1, 0}));
    const DataTable odd({Column::numeric("x", {1}), Column::categorical("y", {"maybe"})});
    try {
        d.target_values(odd);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::data);
    }
}

TEST(Design, Errors) {
    const DataTable one({Column::numeric("x", {1, 2}), Column::boolean("y", {true, true})});
    EXPECT_THROW(make_design(one, "y", Task::classification), Error);
    const DataTable text({Column::categorical("c", {"a", "b"}), Column::boolean("y", {true, false})});
    EXPECT_THROW(make_design(text, "y", Task::classification), Error);
    const DataTable cat({Column::numeric("x", {1, 2}), Column::categorical("y", {"a", "b"})});
    EXPECT_THROW(make_design(cat, "y", Task::regression), Error);
}

TEST(Design, InferTask) {
    EXPECT_EQ(infer_task(Column::boolean("y", {true, false})), Task::classification);
    EXPECT_EQ(infer_task(Column::categorical("y", {"a", "b"})), Task::classification);
    EXPECT_EQ(infer_task(Column::numeric("y", {0, 1, 2, 1, 0})), Task::classification);
    EXPECT_EQ(infer_task(Column::numeric("y", {0.5, 1, 2, 1, 0})), Task::regression);
    std::vector<double> many(50);
    for (std::size_t i = 0; i < many.size(); ++i) many[i] = static_cast<double>(i);
    EXPECT_EQ(infer_task(Column::numeric("y", many)), Task::regression);
}

TEST(EnsemblePolicyText, RoundTrip) {
    for (auto p : {EnsemblePolicy::none, EnsemblePolicy::voting, EnsemblePolicy::stacking, EnsemblePolicy::automatic})
        EXPECT_EQ(parse_ensemble_policy(to_string(p)), p);
    EXPECT_THROW(parse_ensemble_policy("bagging"), Error);
}

TEST(Agent, SingleModelIsSearchWinnerAndHoldoutIsScoredOnce) {
    const auto [train, holdout] = split(synthetic::interaction(600, 4), 450);
    AgentOptions o = quick("y");
    o.ensemble = EnsemblePolicy::none;
    MetadataLedger ledger;
    const ModelReport r = train_and_evaluate(train, holdout, o, &ledger);
    EXPECT_EQ(r.chosen_kind, "single");
    EXPECT_EQ(r.chosen_label, r.search.winner().label);
    for (const auto& t : r.search.trials) EXPECT_FALSE(better(t, r.search.winner())) << t.label;
    EXPECT_DOUBLE_EQ(r.cv_primary, r.search.winner().primary());

    // independent refit of the winner on the training rows only
    const Design d = make_design(train, "y", Task::classification);
    const auto y = d.target_values(train);
    const auto m = autods::model::train(r.search.winner().spec, d.matrix(train), y);
    const MetricSet expect = compute_metrics(d.target_values(holdout), m->predict(d.matrix(holdout)), Task::classification, 1.0);
    EXPECT_EQ(r.holdout.values(), expect.values());

    std::size_t cv = 0, select = 0, hold = 0;
    for (const auto& e : ledger.entries()) {
        if (e.stage != "model") continue;
        cv += e.action == "cv";
        select += e.action == "select";
        hold += e.action == "holdout";
    }
    EXPECT_EQ(cv, r.search.trials.size());
    EXPECT_EQ(select, 1u);
    EXPECT_EQ(hold, 1u);
}

TEST(Agent, EnsembleOnlyWhenStrictlyBetter) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto [train, holdout] = split(synthetic::churn(500, seed), 400);
        AgentOptions o = quick("Exited");
        o.seed = seed;
        o.ensemble = EnsemblePolicy::automatic;
        const ModelReport r = train_and_evaluate(train, holdout, o);
        ASSERT_EQ(r.ensembles.size(), 2u);
        const double single = r.search.winner().primary();
        double best_ens = -1e300;
        for (const auto& e : r.ensembles) best_ens = std::max(best_ens, e.primary());
        if (best_ens > single) {
            EXPECT_NE(r.chosen_kind, "single");
            EXPECT_DOUBLE_EQ(r.cv_primary, best_ens);
            EXPECT_EQ(r.members.size(), 3u);
        } else {
            EXPECT_EQ(r.chosen_kind, "single");
            EXPECT_DOUBLE_EQ(r.cv_primary, single);
        }
    }
}

TEST(Agent, EnsembleFoldsMatchSingleModelFolds) {
    const auto [train, holdout] = split(synthetic::interaction(300, 9), 240);
    AgentOptions o = quick("y");
    o.algorithms = {Algorithm::logistic_regression, Algorithm::decision_tree};
    o.ensemble = EnsemblePolicy::voting;
    const ModelReport r = train_and_evaluate(train, holdout, o);
    ASSERT_EQ(r.ensembles.size(), 1u);
    EXPECT_EQ(r.ensembles[0].fold_metrics.size(), r.search.winner().fold_metrics.size());
    EXPECT_EQ(r.ensembles[0].label.rfind("voting(", 0), 0u);
    for (const auto& f : r.ensembles[0].fold_metrics) EXPECT_EQ(f.values().size(), r.search.winner().fold_metrics[0].values().size());
}

TEST(Agent, Deterministic) {
    const auto [train, holdout] = split(synthetic::interaction(300, 5), 240);
    AgentOptions o = quick("y");
    o.ensemble = EnsemblePolicy::automatic;
    const auto a = to_json(train_and_evaluate(train, holdout, o)).dump();
    o.threads = 3;
    const auto b = to_json(train_and_evaluate(train, holdout, o)).dump();
    EXPECT_EQ(a, b);
}

TEST(Agent, RegressionPicksLinearFamily) {
    const auto [train, holdout] = split(linear(400, 8), 300);
    AgentOptions o;
    o.target = "y";
    o.folds = 3;
    o.ensemble = EnsemblePolicy::none;
    o.algorithms = {Algorithm::ridge, Algorithm::decision_tree, Algorithm::knn};
    const ModelReport r = train_and_evaluate(train, holdout, o);
    EXPECT_EQ(r.design.task, Task::regression);
    EXPECT_EQ(r.search.winner().spec.algorithm, Algorithm::ridge);
    EXPECT_GT(r.holdout.get("r2"), 0.99);
    ASSERT_EQ(r.importances.size(), 2u);
    EXPECT_EQ(r.importances[0].first, "a");
}

TEST(Agent, MulticlassSkipsBinaryOnlyModels) {
    Rng rng(3);
    const std::size_t n = 300;
    std::vector<double> x(n);
    std::vector<std::string> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.normal();
        y[i] = x[i] < -0.5 ? "low" : x[i] < 0.5 ? "mid" : "high";
    }
    const auto [train, holdout] = split(DataTable({Column::numeric("x", x), Column::categorical("y", y)}), 240);
    AgentOptions o;
    o.target = "y";
    o.folds = 3;
    o.algorithms = {Algorithm::decision_tree, Algorithm::gradient_boosting, Algorithm::knn};
    o.ensemble = EnsemblePolicy::automatic;
    const ModelReport r = train_and_evaluate(train, holdout, o);
    EXPECT_EQ(r.design.labels, (std::vector<std::string>{"high", "low", "mid"}));
    for (const auto& t : r.search.trials) EXPECT_NE(t.spec.algorithm, Algorithm::gradient_boosting);
    for (const auto& e : r.ensembles) EXPECT_EQ(e.label.rfind("voting(", 0), 0u);
    EXPECT_GT(r.holdout.get("accuracy"), 0.9);
}

TEST(Agent, ConfigErrors) {
    const auto [train, holdout] = split(linear(60, 1), 40);
    AgentOptions o;
    o.target = "y";
    o.algorithms = {Algorithm::logistic_regression};
    try {
        train_and_evaluate(train, holdout, o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
    }
    o.algorithms = {};
    o.folds = 1;
    EXPECT_THROW(train_and_evaluate(train, holdout, o), Error);
}

TEST(Agent, ModelJson) {
    const auto [train, holdout] = split(synthetic::churn(300, 2), 240);
    AgentOptions o = quick("Exited");
    o.ensemble = EnsemblePolicy::none;
    const auto j = to_json(train_and_evaluate(train, holdout, o));
    for (const char* key : {"task", "target", "labels", "features", "trials", "chosen", "cv_primary", "holdout", "importances", "model"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["cv_primary"]["metric"], "f1");
    EXPECT_EQ(j["features"].size(), 5u);  // Tenure NumOfProducts Balance IsActiveMember Noise
    const auto m = model_from_json(j["model"]);
    EXPECT_EQ(m->to_json(), j["model"]);
}
