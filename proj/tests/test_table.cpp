#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "autods/error.hpp"
#include "autods/ledger.hpp"
#include "autods/rng.hpp"
#include "autods/table.hpp"

using namespace autods;

TEST(Csv, InfersKinds) {
    const auto t = parse_csv("a,b\n1,x\n2,y\n");
    ASSERT_EQ(t.n_cols(), 2u);
    EXPECT_EQ(t.n_rows(), 2u);
    EXPECT_EQ(t.column("a").kind(), ColumnKind::numeric);
    EXPECT_EQ(t.column("b").kind(), ColumnKind::categorical);
}

TEST(Csv, BooleanAndDatetimeInference) {
    const auto t = parse_csv("f,g,d\ntrue,0,2024-01-02\nfalse,1,2024-01-03T10:00:00Z\n,1,\n");
    EXPECT_EQ(t.column("f").kind(), ColumnKind::boolean);
    EXPECT_EQ(t.column("g").kind(), ColumnKind::boolean);
    EXPECT_EQ(t.column("d").kind(), ColumnKind::datetime);
    EXPECT_TRUE(t.column("f").is_missing(2));
    EXPECT_TRUE(t.column("d").is_missing(2));
    EXPECT_EQ(t.column("d").number(1) - t.column("d").number(0), 86400.0 + 36000.0);
}

TEST(Csv, EmptyAndNaAreMissing) {
    const auto t = parse_csv("a,b\n,x\nNA,\n3,\"\"\n");
    EXPECT_TRUE(t.column("a").is_missing(0));
    EXPECT_TRUE(t.column("a").is_missing(1));
    EXPECT_FALSE(t.column("a").is_missing(2));
    EXPECT_TRUE(t.column("b").is_missing(1));
    // quoted empty string is a value, not the sentinel
    EXPECT_FALSE(t.column("b").is_missing(2));
    EXPECT_EQ(t.column("b").missing_count(), 1u);
}

TEST(Csv, RaggedRowReportsLine) {
    try {
        parse_csv("a,b\n1,x\n2\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::data);
        EXPECT_NE(std::string(e.what()).find("ragged row at line 3"), std::string::npos) << e.what();
    }
}

TEST(Csv, DuplicateHeaderIsSchemaError) {
    try {
        parse_csv("a,a\n1,2\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::schema);
    }
}

TEST(Csv, HintsOverrideInference) {
    CsvOptions opt;
    opt.kind_hints["a"] = ColumnKind::categorical;
    opt.extra_missing = {"?"};
    const auto t = parse_csv("a,b\n1,?\n2,4\n", opt);
    EXPECT_EQ(t.column("a").kind(), ColumnKind::categorical);
    EXPECT_EQ(t.column("a").text(0), "1");
    EXPECT_TRUE(t.column("b").is_missing(0));
    EXPECT_EQ(t.column("b").kind(), ColumnKind::numeric);
}

TEST(Csv, QuotedFieldsWithSeparatorsAndNewlines) {
    const auto t = parse_csv("name,v\n\"a,b\",1\n\"line\nbreak\",2\n\"say \"\"hi\"\"\",3\n");
    EXPECT_EQ(t.column("name").text(0), "a,b");
    EXPECT_EQ(t.column("name").text(1), "line\nbreak");
    EXPECT_EQ(t.column("name").text(2), "say \"hi\"");
}

namespace {

DataTable random_table(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = 5 + rng.index(30);
    std::vector<double> num(n);
    std::vector<bool> flag(n);
    std::vector<std::string> cat(n);
    std::vector<std::int64_t> when(n);
    std::vector<std::string> when_text(n);
    std::vector<std::uint8_t> m1(n), m2(n), m3(n), m4(n);
    const std::vector<std::string> levels{"a", "b c", "d,e", "NA", " pad", "q\"x", ""};
    for (std::size_t i = 0; i < n; ++i) {
        num[i] = std::round(rng.normal(0, 1000) * 1000) / 1000 * (rng.bernoulli(0.1) ? 1e-9 : 1.0);
        flag[i] = rng.bernoulli(0.5);
        cat[i] = levels[rng.index(levels.size())];
        when[i] = 1600000000 + static_cast<std::int64_t>(rng.index(100000000));
        when_text[i] = format_iso8601(when[i]);
        m1[i] = rng.bernoulli(0.2);
        m2[i] = rng.bernoulli(0.2);
        m3[i] = rng.bernoulli(0.2);
        m4[i] = rng.bernoulli(0.2);
        if (m3[i]) cat[i].clear();
        if (m4[i]) {
            when[i] = 0;
            when_text[i].clear();
        }
        if (m1[i]) num[i] = 0;
    }
    m1[0] = 0;
    m2[0] = 0;
    m3[0] = 0;
    m4[0] = 0;
    cat[0] = "zz";  // keeps the column categorical on re-read
    return DataTable({Column::numeric("num", num, m1), Column::boolean("flag", flag, m2),
                      Column::categorical("cat", cat, m3), Column::datetime("when", when, when_text, m4)});
}

}  // namespace

TEST(Csv, RoundTripProperty) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const DataTable t = random_table(seed);
        const DataTable back = parse_csv(to_csv(t));
        ASSERT_EQ(back.n_rows(), t.n_rows());
        for (const auto& c : t.columns()) {
            const Column& b = back.column(c.name());
            EXPECT_EQ(b.kind(), c.kind()) << c.name() << " seed " << seed;
            for (std::size_t r = 0; r < t.n_rows(); ++r) {
                ASSERT_EQ(b.is_missing(r), c.is_missing(r)) << c.name() << " row " << r << " seed " << seed;
                if (c.is_missing(r)) continue;
                if (c.kind() == ColumnKind::categorical) {
                    EXPECT_EQ(b.text(r), c.text(r));
                } else {
                    EXPECT_EQ(b.number(r), c.number(r));
                }
            }
        }
        EXPECT_EQ(back, parse_csv(to_csv(back)));
    }
}

TEST(Csv, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "autods_table_roundtrip.csv";
    const DataTable t = random_table(3);
    write_csv(t, path);
    EXPECT_EQ(load_csv(path), parse_csv(to_csv(t)));
    std::filesystem::remove(path);
    EXPECT_THROW(load_csv(path), Error);
}

TEST(Table, InvariantsEnforced) {
    EXPECT_THROW(DataTable({Column::numeric("a", {1, 2}), Column::numeric("a", {1, 2})}), Error);
    EXPECT_THROW(DataTable({Column::numeric("a", {1, 2}), Column::numeric("b", {1})}), Error);
    EXPECT_THROW(DataTable({Column::numeric("", {1})}), Error);
    const auto c = Column::numeric("x", {1.0, std::nan(""), INFINITY});
    EXPECT_FALSE(c.is_missing(0));
    EXPECT_TRUE(c.is_missing(1));
    EXPECT_TRUE(c.is_missing(2));
    EXPECT_EQ(c.number(2), 0.0);
}

TEST(Table, ImmutableOperations) {
    const DataTable t({Column::numeric("a", {1, 2, 3}), Column::categorical("b", {"x", "y", "z"})});
    const auto u = t.with_column(Column::numeric("c", {0, 0, 0}));
    EXPECT_EQ(t.n_cols(), 2u);
    EXPECT_EQ(u.n_cols(), 3u);
    const std::vector<std::size_t> rows{2, 0};
    const auto s = t.take_rows(rows);
    EXPECT_EQ(s.column("b").text(0), "z");
    EXPECT_EQ(t.without_columns({"a"}).column_names(), std::vector<std::string>{"b"});
    EXPECT_THROW(t.column("nope"), Error);
}

TEST(Summary, NumericHandValues) {
    const DataTable t({Column::numeric("x", {1, 2, 3, 4, 5})});
    const auto s = summarize(t).front();
    ASSERT_TRUE(s.numeric);
    EXPECT_DOUBLE_EQ(s.numeric->mean, 3.0);
    EXPECT_NEAR(s.numeric->std, std::sqrt(2.5), 1e-15);
    EXPECT_NEAR(s.numeric->std, 1.5811, 1e-4);
    EXPECT_DOUBLE_EQ(s.numeric->median, 3.0);
    EXPECT_DOUBLE_EQ(s.numeric->q1, 2.0);
    EXPECT_DOUBLE_EQ(s.numeric->q3, 4.0);
}

TEST(Summary, CategoricalMode) {
    const DataTable t({Column::categorical("c", {"a", "a", "b"})});
    const auto s = summarize(t).front();
    ASSERT_TRUE(s.categorical);
    EXPECT_EQ(s.categorical->mode, "a");
    EXPECT_EQ(s.categorical->mode_frequency, 2u);
    EXPECT_EQ(s.distinct_count, 2u);
}

TEST(Summary, AllMissingColumn) {
    const DataTable t({Column::numeric("x", {0, 0}, {1, 1})});
    const auto s = summarize(t).front();
    EXPECT_EQ(s.missing_count, 2u);
    EXPECT_FALSE(s.numeric);
}

TEST(Summary, OrderedQuantilesAndPurity) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const DataTable t = random_table(seed);
        const auto a = summarize(t);
        EXPECT_EQ(a, summarize(t));
        for (const auto& s : a) {
            EXPECT_LE(s.missing_count, s.n_rows);
            if (!s.numeric) continue;
            EXPECT_LE(s.numeric->min, s.numeric->q1);
            EXPECT_LE(s.numeric->q1, s.numeric->median);
            EXPECT_LE(s.numeric->median, s.numeric->q3);
            EXPECT_LE(s.numeric->q3, s.numeric->max);
        }
    }
}

TEST(Quantile, TypeSevenInterpolation) {
    EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.25), 1.75);
    EXPECT_DOUBLE_EQ(quantile({10}, 0.9), 10.0);
    EXPECT_THROW(quantile({}, 0.5), Error);
}

TEST(Iso8601, ParsesAndFormats) {
    EXPECT_EQ(parse_iso8601("1970-01-01"), 0);
    EXPECT_EQ(parse_iso8601("2000-03-01T00:00:00+01:00"), 951865200);
    EXPECT_FALSE(parse_iso8601("2000-13-01"));
    EXPECT_FALSE(parse_iso8601("hello"));
    EXPECT_EQ(format_iso8601(951868800), "2000-03-01T00:00:00Z");
}

// ---------------------------------------------------------------- ledger

namespace {

LedgerEntry random_entry(Rng& rng) {
    LedgerEntry e;
    e.stage = "stage" + std::to_string(rng.index(5));
    e.ts = format_iso8601(static_cast<std::int64_t>(rng.index(2000000000)));
    e.action = rng.bernoulli(0.5) ? "impute" : "test";
    for (std::size_t i = 0, n = rng.index(4); i < n; ++i) e.columns.push_back("c" + std::to_string(rng.index(9)));
    for (std::size_t i = 0, n = rng.index(5); i < n; ++i) {
        const std::string key = "k" + std::to_string(i);
        switch (rng.index(4)) {
            case 0: e.params[key] = rng.bernoulli(0.5); break;
            case 1: e.params[key] = static_cast<std::int64_t>(rng.index(1000000)) - 500000; break;
            case 2: e.params[key] = rng.normal() * std::pow(10.0, static_cast<double>(rng.index(20)) - 10.0); break;
            default: e.params[key] = std::string("v\"\n") + std::to_string(rng.index(100)); break;
        }
    }
    e.results["p"] = rng.uniform();
    e.results["odd"] = make_scalar(std::nan(""));
    if (rng.bernoulli(0.5)) e.provenance.push_back("h" + std::to_string(rng.index(10)));
    return e;
}

}  // namespace

TEST(Ledger, AppendPreservesOrder) {
    MetadataLedger l;
    LedgerEntry a{.stage = "clean", .action = "a"};
    LedgerEntry b{.stage = "test", .action = "b"};
    const auto one = ledger_append(l, a);
    EXPECT_EQ(one.size(), 1u);
    const auto two = ledger_append(one, b);
    ASSERT_EQ(two.size(), 2u);
    EXPECT_EQ(two.entries()[0], a);
    EXPECT_EQ(two.entries()[1], b);
    EXPECT_EQ(one.size(), 1u);
    EXPECT_THROW(l.append(LedgerEntry{}), Error);
}

TEST(Ledger, JsonRoundTripProperty) {
    Rng rng(31);
    for (int rep = 0; rep < 100; ++rep) {
        MetadataLedger l;
        for (std::size_t i = 0, n = 1 + rng.index(6); i < n; ++i) l.append(random_entry(rng));
        const auto back = MetadataLedger::parse(l.dump());
        EXPECT_EQ(back, l);
        EXPECT_EQ(back.dump(), l.dump());
    }
}

TEST(Ledger, SchemaFieldNamesExactAndUnknownRejected) {
    MetadataLedger l;
    l.append({.stage = "s", .ts = "1970-01-01T00:00:00Z", .action = "a"});
    const auto j = l.to_json();
    ASSERT_TRUE(j.contains("entries"));
    const auto& e = j["entries"][0];
    for (const char* k : {"stage", "ts", "action", "columns", "params", "results", "provenance"}) {
        EXPECT_TRUE(e.contains(k)) << k;
    }
    EXPECT_EQ(e.size(), 7u);
    auto bad = j;
    bad["entries"][0]["extra"] = 1;
    EXPECT_THROW(MetadataLedger::from_json(bad), Error);
    auto bad2 = j;
    bad2["entries"][0]["params"]["nested"] = nlohmann::json::array({1});
    EXPECT_THROW(MetadataLedger::from_json(bad2), Error);
    auto bad3 = j;
    bad3["other"] = 1;
    EXPECT_THROW(MetadataLedger::from_json(bad3), Error);
}
