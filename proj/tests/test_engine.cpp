#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "autods/error.hpp"
#include "autods/hypothesis/engine.hpp"
#include "autods/rng.hpp"

using namespace autods;
using namespace autods::hypothesis;
using nlohmann::json;

namespace {

// Brute-force BH: adj_i = min over j with p_j >= p_i of m p_j / rank_j, capped at 1.
std::vector<double> bh_oracle(const std::vector<double>& p) {
    const std::size_t m = p.size();
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        double best = 1.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (p[j] < p[i]) continue;
            std::size_t rank = 0;
            for (std::size_t k = 0; k < m; ++k) rank += p[k] < p[j] || (p[k] == p[j] && k <= j);
            best = std::min(best, p[j] * static_cast<double>(m) / static_cast<double>(rank));
        }
        out[i] = best;
    }
    return out;
}

TEST(Bh, SingleValueUnchanged) { EXPECT_EQ(bh_adjust(std::vector<double>{0.3}), std::vector<double>{0.3}); }

TEST(Bh, EvenlySpacedCollapse) {
    const auto adj = bh_adjust(std::vector<double>{0.01, 0.02, 0.03, 0.04});
    for (double a : adj) EXPECT_NEAR(a, 0.04, 1e-15);
}

TEST(Bh, HandStepUp) {
    const auto adj = bh_adjust(std::vector<double>{0.01, 0.04, 0.03, 0.2});
    EXPECT_NEAR(adj[0], 0.04, 1e-15);
    EXPECT_NEAR(adj[1], 0.16 / 3, 1e-15);
    EXPECT_NEAR(adj[2], 0.16 / 3, 1e-15);
    EXPECT_NEAR(adj[3], 0.2, 1e-15);
}

TEST(Bh, PropertiesAgainstBruteForce) {
    Rng rng(1);
    for (int rep = 0; rep < 300; ++rep) {
        const std::size_t m = 1 + rng.index(25);
        std::vector<double> p(m);
        for (auto& v : p) v = rng.bernoulli(0.2) ? 0.05 : rng.uniform() * rng.uniform();
        const auto adj = bh_adjust(p);
        const auto ref = bh_oracle(p);
        for (std::size_t i = 0; i < m; ++i) {
            EXPECT_NEAR(adj[i], ref[i], 1e-12);
            EXPECT_GE(adj[i], p[i]);
            EXPECT_LE(adj[i], 1.0);
            for (std::size_t j = 0; j < m; ++j) {
                if (p[i] <= p[j]) EXPECT_LE(adj[i], adj[j] + 1e-15);
            }
        }
    }
}

TEST(Bh, RejectsOutOfRange) {
    EXPECT_THROW(bh_adjust(std::vector<double>{0.2, 1.5}), Error);
    EXPECT_THROW(bh_adjust(std::vector<double>{std::nan("")}), Error);
    EXPECT_TRUE(bh_adjust(std::vector<double>{}).empty());
}

// ------------------------------------------------------------------ batches

DataTable planted_churn(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<bool> active(n), exited(n);
    std::vector<double> noise(n), tenure(n);
    for (std::size_t i = 0; i < n; ++i) {
        active[i] = rng.bernoulli(0.5);
        exited[i] = rng.bernoulli(active[i] ? 0.20 : 0.40);
        noise[i] = rng.normal();
        tenure[i] = static_cast<double>(rng.index(10));
    }
    return DataTable({Column::boolean("IsActiveMember", active), Column::boolean("Exited", exited),
                      Column::numeric("Noise", noise), Column::numeric("Tenure", tenure)});
}

HypothesisDoc doc(const std::string& text) { return parse_hypothesis(text); }

const char* kActive = R"({"id":"active","statement":"Active members churn less",
  "test":{"kind":"proportion_comparison","group_by":"IsActiveMember","outcome":"Exited"},"indicator":"IsActiveMember"})";
const char* kNoise = R"({"id":"noise","statement":"Noise differs by churn",
  "test":{"kind":"mean_comparison","group_by":"Exited","value":"Noise"},"indicator":"Noise > 0"})";

TEST(Batch, PlantedActivityEffectIsAccepted) {
    // normal approximation to the power of a 0.20 vs 0.40 difference with 1000 per arm
    const double se = std::sqrt(0.2 * 0.8 / 1000 + 0.4 * 0.6 / 1000);
    const double power = 0.5 * std::erfc(-(0.2 / se - 1.959964) / std::sqrt(2.0));
    ASSERT_GT(power, 0.999);

    int accepted = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const DataTable t = planted_churn(2000, s);
        const BatchResult r = run_batch(t, {doc(kActive)}, {.seed = s});
        const auto& v = r.verdicts[0];
        ASSERT_FALSE(v.error) << *v.error;
        if (v.accepted) {
            ++accepted;
            ASSERT_EQ(v.indicator_column, std::optional<std::string>("hyp_active"));
            ASSERT_TRUE(r.table.has_column("hyp_active"));
            const auto flag = r.table.column("hyp_active").numbers();
            const auto source = t.column("IsActiveMember").numbers();
            EXPECT_TRUE(std::equal(flag.begin(), flag.end(), source.begin(), source.end()));
            EXPECT_NEAR(v.details["rate_difference"].get<double>(), -0.2, 0.07);
        }
    }
    EXPECT_GE(accepted, 19);
}

TEST(Batch, NoiseFalseAcceptancesUnderBh) {
    // 20 true nulls: BH keeps the chance of any acceptance near alpha, so the mean count is far below 1
    const std::size_t n = 120;
    std::vector<HypothesisDoc> docs;
    for (int k = 0; k < 20; ++k) {
        docs.push_back(doc(R"({"id":"n)" + std::to_string(k) + R"(","statement":"s","test":{"kind":"mean_comparison","group_by":"g","value":"v)" +
                           std::to_string(k) + R"("}})"));
    }
    std::size_t false_accepts = 0;
    const int reps = 200;
    for (int rep = 0; rep < reps; ++rep) {
        Rng rng(derive_seed(77, static_cast<std::uint64_t>(rep)));
        std::vector<Column> cols;
        std::vector<bool> g(n);
        for (auto&& x : g) x = rng.bernoulli(0.5);
        cols.push_back(Column::boolean("g", g));
        for (int k = 0; k < 20; ++k) {
            std::vector<double> v(n);
            for (auto& x : v) x = rng.normal();
            cols.push_back(Column::numeric("v" + std::to_string(k), v));
        }
        const BatchResult r = run_batch(DataTable(cols), docs, {.fdr = Fdr::benjamini_hochberg, .seed = 1});
        for (const auto& v : r.verdicts) false_accepts += v.accepted;
    }
    EXPECT_LE(static_cast<double>(false_accepts) / reps, 1.0);
}

TEST(Batch, ErroringDocIsIsolated) {
    DataTable t = planted_churn(300, 4).with_column(Column::numeric("Const", std::vector<double>(300, 5.0)));
    const auto bad = doc(R"({"id":"const","statement":"s","test":{"kind":"correlation","x":"Const","y":"Noise"},"indicator":"Const > 1"})");
    const auto broken = doc(R"({"id":"ghost","statement":"s","test":{"kind":"normality","value":"Missing"}})");
    const BatchResult alone = run_batch(t, {doc(kActive)}, {.fdr = Fdr::benjamini_hochberg});
    const BatchResult mixed = run_batch(t, {bad, doc(kActive), broken}, {.fdr = Fdr::benjamini_hochberg});
    ASSERT_TRUE(mixed.verdicts[0].error.has_value());
    ASSERT_TRUE(mixed.verdicts[2].error.has_value());
    EXPECT_NE(mixed.verdicts[2].error->find("Missing"), std::string::npos);
    for (std::size_t i : {0u, 2u}) {
        EXPECT_FALSE(mixed.verdicts[i].accepted);
        EXPECT_EQ(mixed.verdicts[i].adjusted_p, 1.0);
        EXPECT_FALSE(mixed.verdicts[i].indicator_column);
    }
    EXPECT_EQ(mixed.verdicts[1], alone.verdicts[0]);
}

std::vector<HypothesisDoc> mixed_docs() {
    return {doc(kActive), doc(kNoise),
            doc(R"({"id":"tenure","statement":"Short tenure churns more","test":{"kind":"proportion_comparison","group_by":"Tenure < 3","outcome":"Exited"},"indicator":"Tenure < 3"})"),
            doc(R"({"id":"dist","statement":"s","test":{"kind":"distribution_comparison","group_by":"IsActiveMember","value":"Noise"}})"),
            doc(R"({"id":"outl","statement":"s","test":{"kind":"outlier_scan","columns":["Noise"],"params":{"method":"zscore","z":2.5}}})"),
            doc(R"({"id":"cp","statement":"s","test":{"kind":"change_point","value":"Noise","params":{"permutations":200}}})")};
}

TEST(Batch, OnlyHypColumnsAreAdded) {
    const DataTable t = planted_churn(800, 5);
    const BatchResult r = run_batch(t, mixed_docs(), {.seed = 3});
    for (const auto& c : t.columns()) EXPECT_EQ(r.table.column(c.name()), c);
    for (const auto& c : r.table.columns()) {
        if (!t.has_column(c.name())) EXPECT_EQ(c.name().rfind("hyp_", 0), 0u) << c.name();
    }
    EXPECT_GT(r.table.n_cols(), t.n_cols());
}

TEST(Batch, AcceptanceRuleAndIndicatorContract) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const DataTable t = planted_churn(400, s);
        const auto docs = mixed_docs();
        const BatchResult r = run_batch(t, docs, {.fdr = s % 2 ? Fdr::benjamini_hochberg : Fdr::none, .seed = s});
        for (std::size_t i = 0; i < docs.size(); ++i) {
            const auto& v = r.verdicts[i];
            EXPECT_EQ(v.accepted, v.adjusted_p < v.alpha) << v.doc_id;
            if (v.indicator_column) {
                EXPECT_TRUE(v.accepted);
                EXPECT_TRUE(docs[i].indicator.has_value());
            }
            if (v.accepted && docs[i].indicator && !v.descriptive) EXPECT_TRUE(v.indicator_column);
            if (!v.error) EXPECT_GE(v.adjusted_p, v.result.p_value);
            if (v.descriptive) EXPECT_EQ(v.adjusted_p, v.result.p_value);
        }
    }
}

TEST(Batch, DescriptiveScanAttachesFlagsOutsideBh) {
    const DataTable t = planted_churn(500, 8);
    const BatchResult r = run_batch(t, mixed_docs(), {.fdr = Fdr::benjamini_hochberg});
    const auto& v = r.verdicts[4];
    ASSERT_TRUE(v.descriptive);
    ASSERT_TRUE(v.accepted);  // 2.5 sd on 500 normals flags some rows
    EXPECT_EQ(v.attached_columns, (std::vector<std::string>{"hyp_outl"}));
    EXPECT_TRUE(r.table.has_column("hyp_outl"));
}

TEST(Batch, PermutingDocsPermutesVerdicts) {
    const DataTable t = planted_churn(600, 9);
    auto docs = mixed_docs();
    const BatchResult a = run_batch(t, docs, {.fdr = Fdr::benjamini_hochberg, .seed = 5});
    std::vector<std::size_t> perm(docs.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[1], perm[3]);
    std::vector<HypothesisDoc> shuffled;
    for (std::size_t i : perm) shuffled.push_back(docs[i]);
    const BatchResult b = run_batch(t, shuffled, {.fdr = Fdr::benjamini_hochberg, .seed = 5});
    for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_EQ(b.verdicts[k], a.verdicts[perm[k]]);
    for (const auto& c : a.table.columns()) EXPECT_EQ(b.table.column(c.name()), c);
}

TEST(Batch, RerunIsBitIdenticalAcrossThreads) {
    set_fixed_timestamp("2026-01-01T00:00:00Z");
    const DataTable t = planted_churn(500, 10);
    MetadataLedger l1, l2;
    const BatchResult a = run_batch(t, mixed_docs(), {.seed = 42, .threads = 1}, &l1);
    const BatchResult b = run_batch(t, mixed_docs(), {.seed = 42, .threads = 4}, &l2);
    set_fixed_timestamp(std::nullopt);
    EXPECT_EQ(a.table, b.table);
    EXPECT_EQ(a.verdicts, b.verdicts);
    EXPECT_EQ(l1.dump(), l2.dump());
}

TEST(Batch, LedgerRecordsEveryDoc) {
    const DataTable t = planted_churn(400, 11);
    MetadataLedger ledger;
    const auto docs = mixed_docs();
    const BatchResult r = run_batch(t, docs, {}, &ledger);
    ASSERT_EQ(ledger.size(), docs.size() + 1);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto& e = ledger.entries()[i];
        EXPECT_EQ(e.stage, "hypothesis");
        EXPECT_EQ(std::get<std::string>(e.params.at("statement")), docs[i].statement);
        for (const char* key : {"statistic", "p_value", "adjusted_p", "verdict"}) EXPECT_TRUE(e.results.count(key)) << key;
        EXPECT_EQ(std::get<bool>(e.results.at("accepted")), r.verdicts[i].accepted);
    }
    EXPECT_EQ(ledger.entries().back().action, "batch");
}

TEST(Batch, ExistingColumnNameIsNotOverwritten) {
    const DataTable t = planted_churn(1000, 12).with_column(Column::boolean("hyp_active", std::vector<bool>(1000, false)));
    const BatchResult r = run_batch(t, {doc(kActive)});
    EXPECT_TRUE(r.verdicts[0].error.has_value());
    EXPECT_EQ(r.table, t);
}

TEST(Batch, VerdictJsonRoundTrip) {
    const DataTable t = planted_churn(400, 13);
    const auto docs = mixed_docs();
    const BatchResult r = run_batch(t, docs, {.fdr = Fdr::benjamini_hochberg});
    const json report = hypotheses_report(docs, r.verdicts, Fdr::benjamini_hochberg);
    ASSERT_EQ(report["hypotheses"].size(), docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const json& item = report["hypotheses"][i];
        EXPECT_EQ(verdict_from_json(json::parse(item["verdict"].dump())), r.verdicts[i]);
        EXPECT_EQ(doc_from_json(item["doc"]), docs[i]);
    }
    EXPECT_EQ(parse_fdr("bh"), Fdr::benjamini_hochberg);
    EXPECT_THROW(parse_fdr("holm"), Error);
}

}  // namespace
