#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "autods/hypothesis/expr.hpp"
#include "autods/stats/inference.hpp"
#include "autods/table.hpp"

namespace autods::hypothesis {

enum class TestKind {
    proportion_comparison,
    mean_comparison,
    median_comparison,
    distribution_comparison,
    variance_comparison,
    anova,
    correlation,
    regression,
    normality,
    trend,
    change_point,
    survival,
    outlier_scan,
    anomaly_scan,
    clustering,
    latent_structure,
};

const char* to_string(TestKind kind) noexcept;
std::optional<TestKind> parse_test_kind(std::string_view text) noexcept;
const std::vector<TestKind>& all_test_kinds();

/// Descriptive kinds are accepted on their own criterion, not on a p-value.
bool is_descriptive(TestKind kind) noexcept;

/// Name of the statistics routine a kind runs.
const char* operation_name(TestKind kind) noexcept;

/// column: a single column name. group: a condition (two groups, true first)
/// or a column whose levels form the groups. columns: a list of names.
enum class BindingForm { column, group, columns };

struct Binding {
    BindingForm form = BindingForm::column;
    std::string column;            // column form, or group form naming a plain column
    std::optional<Expr> condition;  // group form with a condition
    std::vector<std::string> columns;

    static Binding of_column(std::string name);
    static Binding of_condition(Expr condition);
    static Binding of_columns(std::vector<std::string> names);

    bool operator==(const Binding&) const = default;
};

struct TestPlan {
    TestKind kind = TestKind::mean_comparison;
    std::map<std::string, Binding> bindings;
    nlohmann::json params = nlohmann::json::object();  // only explicitly given params

    const Binding* binding(const std::string& name) const;
    /// Given value or the catalog default.
    nlohmann::json param(const std::string& name) const;

    bool operator==(const TestPlan&) const = default;
};

struct HypothesisDoc {
    std::string id;  // [A-Za-z0-9_]+, becomes part of column names
    std::string statement;
    TestPlan test;
    double alpha = 0.05;
    std::optional<Expr> indicator;

    bool operator==(const HypothesisDoc&) const = default;
};

/// Machine-readable description of every kind: bindings, params, defaults.
nlohmann::json catalog_json();

/// Structural validation; every violation is collected into one
/// ValidationError. With a table, bound columns and expressions are also
/// checked against its schema.
HypothesisDoc doc_from_json(const nlohmann::json& j, const DataTable* schema = nullptr);
HypothesisDoc parse_hypothesis(std::string_view json_text, const DataTable* schema = nullptr);

/// A JSON array of docs or {"hypotheses": [...]}. Issues are prefixed with
/// the doc position and id; duplicate ids are rejected.
std::vector<HypothesisDoc> parse_batch(std::string_view json_text, const DataTable* schema = nullptr);
std::vector<HypothesisDoc> batch_from_json(const nlohmann::json& j, const DataTable* schema = nullptr);

nlohmann::json to_json(const HypothesisDoc& doc);
std::string serialize(const HypothesisDoc& doc);

/// Schema problems of a structurally valid doc (empty when fine).
std::vector<std::string> check_schema(const HypothesisDoc& doc, const DataTable& table);

/// What one execution produced. Descriptive kinds set `criterion` and may
/// attach score or flag columns.
struct TestOutcome {
    stats::TestResult result;
    nlohmann::json details = nlohmann::json::object();
    std::optional<bool> criterion;
    std::vector<Column> attachments;
};

struct ExecutableTest {
    std::string id;
    TestKind kind = TestKind::mean_comparison;
    std::string operation;
    std::vector<std::string> columns;  // every column the test reads
    std::function<TestOutcome(const DataTable&, std::uint64_t seed)> run;
};

/// Binds the doc to a table: schema checks plus data-dependent ones such as
/// the number of group levels. Throws ValidationError.
ExecutableTest compile(const HypothesisDoc& doc, const DataTable& table);

/// Row groups induced by a group binding; -1 marks excluded rows.
struct GroupSplit {
    std::vector<std::string> labels;
    std::vector<int> group;
};

/// Numeric columns with more than this many distinct values cannot group.
inline constexpr std::size_t kMaxGroupLevels = 10;

GroupSplit split_groups(const Binding& binding, const DataTable& table);

}  // namespace autods::hypothesis
