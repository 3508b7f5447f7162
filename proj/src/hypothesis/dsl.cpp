#include "autods/hypothesis/dsl.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "autods/error.hpp"
#include "autods/rng.hpp"
#include "autods/stats/multivariate.hpp"
#include "autods/stats/survival.hpp"

namespace autods::hypothesis {

using nlohmann::json;

namespace {

// ------------------------------------------------------------------ catalog

enum class Role { numeric, event, any, order, group, multi };

struct BindingSpec {
    std::string name;
    BindingForm form;
    Role role;
    bool required = true;
};

enum class ParamType { number, integer, boolean, choice };

struct ParamSpec {
    std::string name;
    ParamType type;
    json fallback;
    double lo = 0.0;
    double hi = 0.0;
    bool lo_open = false;
    std::vector<std::string> choices;
};

struct KindSpec {
    TestKind kind;
    const char* name;
    const char* op;
    std::vector<BindingSpec> bindings;
    std::vector<ParamSpec> params;
    std::size_t min_levels = 0;
    std::size_t max_levels = 0;  // 0 = no upper limit besides kMaxGroupLevels
    std::size_t min_columns = 0;
    bool descriptive = false;
};

BindingSpec group_by() { return {"group_by", BindingForm::group, Role::group}; }
BindingSpec value() { return {"value", BindingForm::column, Role::numeric}; }

ParamSpec param(std::string name, ParamType type, json fallback) {
    ParamSpec p;
    p.name = std::move(name);
    p.type = type;
    p.fallback = std::move(fallback);
    return p;
}

ParamSpec choice(std::string name, std::vector<std::string> options) {
    ParamSpec p = param(std::move(name), ParamType::choice, options.front());
    p.choices = std::move(options);
    return p;
}

ParamSpec number(std::string name, double fallback, double lo, double hi, bool lo_open = false) {
    ParamSpec p = param(std::move(name), ParamType::number, fallback);
    p.lo = lo;
    p.hi = hi;
    p.lo_open = lo_open;
    return p;
}

ParamSpec integer(std::string name, int fallback, int lo, int hi) {
    ParamSpec p = param(std::move(name), ParamType::integer, fallback);
    p.lo = lo;
    p.hi = hi;
    return p;
}

const std::vector<KindSpec>& catalog() {
    static const std::vector<KindSpec> specs = [] {
        std::vector<KindSpec> s;
        s.push_back({TestKind::proportion_comparison, "proportion_comparison", "chi_square_independence",
                     {group_by(), {"outcome", BindingForm::column, Role::any}},
                     {param("yates", ParamType::boolean, true)}, 2});
        s.push_back({TestKind::mean_comparison, "mean_comparison", "t_test", {group_by(), value()},
                     {choice("variant", {"welch", "pooled"})}, 2, 2});
        s.push_back({TestKind::median_comparison, "median_comparison", "mann_whitney_u", {group_by(), value()}, {}, 2, 2});
        s.push_back({TestKind::distribution_comparison, "distribution_comparison", "ks_test", {group_by(), value()}, {}, 2, 2});
        s.push_back({TestKind::variance_comparison, "variance_comparison", "levene_test", {group_by(), value()},
                     {choice("center", {"median", "mean"})}, 2});
        s.push_back({TestKind::anova, "anova", "one_way_anova", {group_by(), value()}, {}, 2});
        s.push_back({TestKind::correlation, "correlation", "pearson_test",
                     {{"x", BindingForm::column, Role::numeric}, {"y", BindingForm::column, Role::numeric}}, {}});
        s.push_back({TestKind::regression, "regression", "regression_slope_test",
                     {{"x", BindingForm::column, Role::numeric}, {"y", BindingForm::column, Role::numeric}}, {}});
        s.push_back({TestKind::normality, "normality", "shapiro_wilk", {value()}, {}});
        s.push_back({TestKind::trend, "trend", "trend_test",
                     {value(), {"order_by", BindingForm::column, Role::order, false}}, {}});
        s.push_back({TestKind::change_point, "change_point", "cusum_change_point",
                     {value(), {"order_by", BindingForm::column, Role::order, false}},
                     {integer("permutations", 1000, 100, 100000)}});
        s.push_back({TestKind::survival, "survival", "log_rank",
                     {{"duration", BindingForm::column, Role::numeric},
                      {"event", BindingForm::column, Role::event},
                      group_by()},
                     {}, 2});
        KindSpec outliers{TestKind::outlier_scan, "outlier_scan", "outliers_iqr",
                          {{"columns", BindingForm::columns, Role::multi}},
                          {choice("method", {"iqr", "zscore", "mahalanobis"}), number("k", 1.5, 0.0, 100.0, true),
                           number("z", 3.0, 0.0, 100.0, true), number("probability", 0.975, 0.5, 1.0, true)}};
        outliers.min_columns = 1;
        outliers.descriptive = true;
        s.push_back(outliers);
        KindSpec anomaly{TestKind::anomaly_scan, "anomaly_scan", "isolation_forest",
                         {{"columns", BindingForm::columns, Role::multi}},
                         {number("threshold", 0.6, 0.0, 1.0, true), integer("trees", 100, 10, 1000)}};
        anomaly.min_columns = 1;
        anomaly.descriptive = true;
        s.push_back(anomaly);
        KindSpec clustering{TestKind::clustering, "clustering", "kmeans",
                            {{"columns", BindingForm::columns, Role::multi}},
                            {integer("k", 3, 2, 20), number("stability", 0.8, 0.0, 1.0, true),
                             integer("resamples", 10, 2, 100)}};
        clustering.min_columns = 1;
        clustering.descriptive = true;
        s.push_back(clustering);
        KindSpec latent{TestKind::latent_structure, "latent_structure", "pca",
                        {{"columns", BindingForm::columns, Role::multi}},
                        {number("variance_target", 0.95, 0.0, 1.0, true)}};
        latent.min_columns = 2;
        latent.descriptive = true;
        s.push_back(latent);
        return s;
    }();
    return specs;
}

const KindSpec& spec_of(TestKind kind) {
    for (const auto& s : catalog()) {
        if (s.kind == kind) return s;
    }
    fail(ErrorKind::validation, "unknown test kind");
}

const char* role_name(Role r) {
    switch (r) {
        case Role::numeric: return "numeric";
        case Role::event: return "boolean or 0/1";
        case Role::any: return "any";
        case Role::order: return "numeric or datetime";
        case Role::group: return "condition or grouping column";
        case Role::multi: return "list of numeric columns";
    }
    return "?";
}

bool valid_id(const std::string& id) {
    return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

void check_param(const ParamSpec& p, const json& v, const std::string& kind, std::vector<std::string>& issues) {
    const std::string where = "param " + quote(p.name) + " of " + kind;
    switch (p.type) {
        case ParamType::boolean:
            if (!v.is_boolean()) issues.push_back(where + " must be true or false");
            return;
        case ParamType::choice: {
            if (!v.is_string() || std::find(p.choices.begin(), p.choices.end(), v.get<std::string>()) == p.choices.end()) {
                std::string options;
                for (const auto& c : p.choices) options += (options.empty() ? "" : "|") + c;
                issues.push_back(where + " must be one of " + options);
            }
            return;
        }
        case ParamType::integer:
            if (!v.is_number_integer()) {
                issues.push_back(where + " must be an integer");
                return;
            }
            break;
        case ParamType::number:
            if (!v.is_number()) {
                issues.push_back(where + " must be a number");
                return;
            }
            break;
    }
    const double x = v.get<double>();
    const bool low_ok = p.lo_open ? x > p.lo : x >= p.lo;
    if (!low_ok || x > p.hi || !std::isfinite(x)) {
        issues.push_back(where + " must lie in " + (p.lo_open ? "(" : "[") + json(p.lo).dump() + ", " + json(p.hi).dump() + "]");
    }
}

std::optional<Expr> parse_condition(const std::string& text, const std::string& where, std::vector<std::string>& issues) {
    try {
        return parse_expr(text);
    } catch (const ValidationError& e) {
        for (const auto& i : e.issues()) issues.push_back(where + ": " + i);
    }
    return std::nullopt;
}

std::optional<Binding> read_binding(const BindingSpec& b, const json& v, const std::string& kind,
                                    std::vector<std::string>& issues) {
    const std::string where = "binding " + quote(b.name) + " of " + kind;
    switch (b.form) {
        case BindingForm::column:
            if (!v.is_string() || v.get<std::string>().empty()) {
                issues.push_back(where + " must be a column name");
                return std::nullopt;
            }
            return Binding::of_column(v.get<std::string>());
        case BindingForm::group: {
            if (!v.is_string() || v.get<std::string>().empty()) {
                issues.push_back(where + " must be a column name or a condition");
                return std::nullopt;
            }
            auto e = parse_condition(v.get<std::string>(), where, issues);
            if (!e) return std::nullopt;
            if (e->is_column()) {
                Binding out = Binding::of_column(e->name);
                out.form = BindingForm::group;
                return out;
            }
            return Binding::of_condition(std::move(*e));
        }
        case BindingForm::columns: {
            if (!v.is_array() || v.empty()) {
                issues.push_back(where + " must be a non-empty list of column names");
                return std::nullopt;
            }
            std::vector<std::string> names;
            for (const auto& x : v) {
                if (!x.is_string() || x.get<std::string>().empty()) {
                    issues.push_back(where + " must contain only column names");
                    return std::nullopt;
                }
                const std::string name = x.get<std::string>();
                if (std::find(names.begin(), names.end(), name) != names.end()) {
                    issues.push_back(where + " lists " + quote(name) + " twice");
                    return std::nullopt;
                }
                names.push_back(name);
            }
            return Binding::of_columns(std::move(names));
        }
    }
    return std::nullopt;
}

void check_column_role(const std::string& name, Role role, const std::string& where, const DataTable& table,
                       std::vector<std::string>& issues) {
    const Column* c = table.find(name);
    if (!c) {
        issues.push_back(where + ": unknown column " + quote(name));
        return;
    }
    const ColumnKind k = c->kind();
    bool ok = true;
    switch (role) {
        case Role::numeric:
        case Role::multi: ok = k != ColumnKind::categorical; break;
        case Role::event: ok = k == ColumnKind::boolean || k == ColumnKind::numeric; break;
        case Role::order: ok = k == ColumnKind::numeric || k == ColumnKind::datetime; break;
        case Role::group: ok = k != ColumnKind::datetime; break;
        case Role::any: break;
    }
    if (!ok) {
        issues.push_back(where + ": column " + quote(name) + " is " + to_string(k) + ", expected " + role_name(role));
    }
}

template <class F>
void collect(std::vector<std::string>& issues, F&& f) {
    try {
        f();
    } catch (const ValidationError& e) {
        issues.insert(issues.end(), e.issues().begin(), e.issues().end());
    } catch (const Error& e) {
        issues.push_back(e.what());
    }
}

}  // namespace

const char* to_string(TestKind kind) noexcept {
    for (const auto& s : catalog()) {
        if (s.kind == kind) return s.name;
    }
    return "?";
}

std::optional<TestKind> parse_test_kind(std::string_view text) noexcept {
    for (const auto& s : catalog()) {
        if (text == s.name) return s.kind;
    }
    return std::nullopt;
}

const std::vector<TestKind>& all_test_kinds() {
    static const std::vector<TestKind> kinds = [] {
        std::vector<TestKind> out;
        for (const auto& s : catalog()) out.push_back(s.kind);
        return out;
    }();
    return kinds;
}

bool is_descriptive(TestKind kind) noexcept {
    for (const auto& s : catalog()) {
        if (s.kind == kind) return s.descriptive;
    }
    return false;
}

const char* operation_name(TestKind kind) noexcept {
    for (const auto& s : catalog()) {
        if (s.kind == kind) return s.op;
    }
    return "?";
}

Binding Binding::of_column(std::string name) {
    Binding b;
    b.form = BindingForm::column;
    b.column = std::move(name);
    return b;
}

Binding Binding::of_condition(Expr condition) {
    Binding b;
    b.form = BindingForm::group;
    b.condition = std::move(condition);
    return b;
}

Binding Binding::of_columns(std::vector<std::string> names) {
    Binding b;
    b.form = BindingForm::columns;
    b.columns = std::move(names);
    return b;
}

const Binding* TestPlan::binding(const std::string& name) const {
    auto it = bindings.find(name);
    return it == bindings.end() ? nullptr : &it->second;
}

json TestPlan::param(const std::string& name) const {
    if (params.contains(name)) return params.at(name);
    for (const auto& p : spec_of(kind).params) {
        if (p.name == name) return p.fallback;
    }
    fail(ErrorKind::validation, std::string("no param '") + name + "' for " + to_string(kind));
}

json catalog_json() {
    json out = json::array();
    for (const auto& s : catalog()) {
        json k = {{"kind", s.name}, {"operation", s.op}, {"descriptive", s.descriptive}};
        json bindings = json::array();
        for (const auto& b : s.bindings) {
            bindings.push_back({{"name", b.name}, {"expects", role_name(b.role)}, {"required", b.required}});
        }
        k["bindings"] = bindings;
        json params = json::object();
        for (const auto& p : s.params) {
            json d = {{"default", p.fallback}};
            if (p.type == ParamType::choice) d["choices"] = p.choices;
            if (p.type == ParamType::number || p.type == ParamType::integer) d["range"] = {p.lo, p.hi};
            params[p.name] = d;
        }
        k["params"] = params;
        if (s.min_levels) k["group_levels"] = {s.min_levels, s.max_levels ? s.max_levels : kMaxGroupLevels};
        out.push_back(k);
    }
    return out;
}

std::vector<std::string> check_schema(const HypothesisDoc& doc, const DataTable& table) {
    std::vector<std::string> issues;
    const KindSpec& spec = spec_of(doc.test.kind);
    for (const auto& b : spec.bindings) {
        const Binding* bound = doc.test.binding(b.name);
        if (!bound) continue;
        const std::string where = "binding " + quote(b.name);
        if (bound->condition) {
            for (const auto& i : typecheck(*bound->condition, table)) issues.push_back(where + ": " + i);
        } else if (bound->form == BindingForm::columns) {
            for (const auto& c : bound->columns) check_column_role(c, b.role, where, table, issues);
        } else {
            check_column_role(bound->column, b.role, where, table, issues);
        }
    }
    if (doc.indicator) {
        for (const auto& i : typecheck(*doc.indicator, table)) issues.push_back("indicator: " + i);
    }
    return issues;
}

HypothesisDoc doc_from_json(const json& j, const DataTable* schema) {
    std::vector<std::string> issues;
    HypothesisDoc doc;
    if (!j.is_object()) throw ValidationError({"hypothesis must be a JSON object"});
    static const std::set<std::string> fields{"id", "statement", "test", "alpha", "indicator"};
    for (const auto& [key, _] : j.items()) {
        if (!fields.count(key)) issues.push_back("unknown field " + quote(key));
    }
    if (!j.contains("id") || !j["id"].is_string()) {
        issues.push_back("field 'id' must be a string");
    } else {
        doc.id = j["id"].get<std::string>();
        if (!valid_id(doc.id)) issues.push_back("id " + quote(doc.id) + " must be non-empty letters, digits or '_'");
    }
    if (!j.contains("statement") || !j["statement"].is_string() || j["statement"].get<std::string>().empty()) {
        issues.push_back("field 'statement' must be a non-empty string");
    } else {
        doc.statement = j["statement"].get<std::string>();
    }
    if (j.contains("alpha")) {
        const json& a = j["alpha"];
        if (!a.is_number() || !(a.get<double>() > 0.0 && a.get<double>() < 1.0)) {
            issues.push_back("alpha must be a number in (0, 1)");
        } else {
            doc.alpha = a.get<double>();
        }
    }
    if (j.contains("indicator") && !j["indicator"].is_null()) {
        if (!j["indicator"].is_string()) {
            issues.push_back("indicator must be a condition string");
        } else {
            doc.indicator = parse_condition(j["indicator"].get<std::string>(), "indicator", issues);
        }
    }
    if (!j.contains("test") || !j["test"].is_object()) {
        issues.push_back("field 'test' must be an object");
    } else {
        const json& t = j["test"];
        std::optional<TestKind> kind;
        if (!t.contains("kind") || !t["kind"].is_string()) {
            issues.push_back("test.kind must be a string");
        } else {
            kind = parse_test_kind(t["kind"].get<std::string>());
            if (!kind) issues.push_back("unknown test kind " + quote(t["kind"].get<std::string>()));
        }
        if (kind) {
            const KindSpec& spec = spec_of(*kind);
            doc.test.kind = *kind;
            for (const auto& [key, v] : t.items()) {
                if (key == "kind" || key == "params") continue;
                const bool known = std::any_of(spec.bindings.begin(), spec.bindings.end(),
                                               [&](const BindingSpec& b) { return b.name == key; });
                if (!known) issues.push_back("unknown binding " + quote(key) + " for " + spec.name);
            }
            for (const auto& b : spec.bindings) {
                if (!t.contains(b.name)) {
                    if (b.required) issues.push_back("missing binding " + quote(b.name) + " for " + spec.name);
                    continue;
                }
                if (auto bound = read_binding(b, t[b.name], spec.name, issues)) {
                    if (bound->form == BindingForm::columns && bound->columns.size() < spec.min_columns) {
                        issues.push_back(std::string(spec.name) + " needs at least " + std::to_string(spec.min_columns) +
                                         " columns");
                    }
                    doc.test.bindings.emplace(b.name, std::move(*bound));
                }
            }
            if (t.contains("params")) {
                if (!t["params"].is_object()) {
                    issues.push_back("test.params must be an object");
                } else {
                    for (const auto& [key, v] : t["params"].items()) {
                        auto p = std::find_if(spec.params.begin(), spec.params.end(),
                                              [&](const ParamSpec& ps) { return ps.name == key; });
                        if (p == spec.params.end()) {
                            issues.push_back("unknown param " + quote(key) + " for " + spec.name);
                            continue;
                        }
                        const std::size_t before = issues.size();
                        check_param(*p, v, spec.name, issues);
                        if (issues.size() == before) doc.test.params[key] = v;
                    }
                }
            }
        }
    }
    if (issues.empty() && schema) issues = check_schema(doc, *schema);
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return doc;
}

HypothesisDoc parse_hypothesis(std::string_view json_text, const DataTable* schema) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError({std::string("invalid JSON: ") + e.what()});
    }
    return doc_from_json(j, schema);
}

std::vector<HypothesisDoc> batch_from_json(const json& j, const DataTable* schema) {
    const json* list = &j;
    if (j.is_object() && j.contains("hypotheses")) list = &j["hypotheses"];
    if (!list->is_array()) throw ValidationError({"expected an array of hypotheses"});
    std::vector<HypothesisDoc> docs;
    std::vector<std::string> issues;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < list->size(); ++i) {
        const json& item = (*list)[i];
        std::string label = "hypothesis " + std::to_string(i);
        if (item.is_object() && item.contains("id") && item["id"].is_string()) {
            label += " (" + item["id"].get<std::string>() + ")";
        }
        try {
            HypothesisDoc d = doc_from_json(item, schema);
            if (!seen.insert(d.id).second) {
                issues.push_back(label + ": duplicate id " + quote(d.id));
                continue;
            }
            docs.push_back(std::move(d));
        } catch (const ValidationError& e) {
            for (const auto& msg : e.issues()) issues.push_back(label + ": " + msg);
        }
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return docs;
}

std::vector<HypothesisDoc> parse_batch(std::string_view json_text, const DataTable* schema) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError({std::string("invalid JSON: ") + e.what()});
    }
    return batch_from_json(j, schema);
}

json to_json(const HypothesisDoc& doc) {
    json test = {{"kind", to_string(doc.test.kind)}};
    for (const auto& [name, b] : doc.test.bindings) {
        switch (b.form) {
            case BindingForm::column: test[name] = b.column; break;
            case BindingForm::group: test[name] = b.condition ? to_string(*b.condition) : to_string(Expr::column(b.column)); break;
            case BindingForm::columns: test[name] = b.columns; break;
        }
    }
    if (!doc.test.params.empty()) test["params"] = doc.test.params;
    json out = {{"id", doc.id}, {"statement", doc.statement}, {"test", test}, {"alpha", doc.alpha}};
    if (doc.indicator) out["indicator"] = to_string(*doc.indicator);
    return out;
}

std::string serialize(const HypothesisDoc& doc) { return to_json(doc).dump(); }

// ------------------------------------------------------------------ groups

namespace {

std::string level_label(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    return json(v).dump();
}

struct Levels {
    std::vector<std::string> labels;
    std::vector<int> code;  // -1 for missing
};

/// Distinct values of a column as sorted levels.
Levels column_levels(const Column& c, std::size_t limit, const char* what) {
    const std::size_t n = c.size();
    Levels out;
    out.code.assign(n, -1);
    if (c.kind() == ColumnKind::categorical) {
        std::set<std::string> distinct;
        for (std::size_t i = 0; i < n; ++i) {
            if (!c.is_missing(i)) distinct.insert(c.text(i));
        }
        out.labels.assign(distinct.begin(), distinct.end());
        for (std::size_t i = 0; i < n; ++i) {
            if (c.is_missing(i)) continue;
            out.code[i] = static_cast<int>(std::lower_bound(out.labels.begin(), out.labels.end(), c.text(i)) - out.labels.begin());
        }
        return out;
    }
    std::set<double> distinct;
    for (std::size_t i = 0; i < n; ++i) {
        if (!c.is_missing(i)) distinct.insert(c.number(i));
    }
    if (distinct.size() > limit) {
        throw ValidationError({std::string(what) + " column " + quote(c.name()) + " has " + std::to_string(distinct.size()) +
                               " distinct values; at most " + std::to_string(limit) + " allowed"});
    }
    std::vector<double> values(distinct.begin(), distinct.end());
    for (double v : values) {
        out.labels.push_back(c.kind() == ColumnKind::boolean ? (v != 0.0 ? "true" : "false") : level_label(v));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (c.is_missing(i)) continue;
        out.code[i] = static_cast<int>(std::lower_bound(values.begin(), values.end(), c.number(i)) - values.begin());
    }
    return out;
}

}  // namespace

GroupSplit split_groups(const Binding& binding, const DataTable& table) {
    GroupSplit out;
    if (binding.condition) {
        const Mask m = eval_condition(*binding.condition, table);
        out.labels = {"true", "false"};
        out.group.assign(m.size(), -1);
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (!m.missing[i]) out.group[i] = m.value[i] ? 0 : 1;
        }
        return out;
    }
    const Column& c = table.column(binding.column);
    if (c.kind() == ColumnKind::datetime) throw ValidationError({"datetime column " + quote(c.name()) + " cannot form groups"});
    Levels levels = column_levels(c, kMaxGroupLevels, "grouping");
    if (c.kind() == ColumnKind::boolean && levels.labels.size() == 2) {
        // true first, matching conditions
        std::swap(levels.labels[0], levels.labels[1]);
        for (int& g : levels.code) {
            if (g >= 0) g = 1 - g;
        }
    }
    out.labels = std::move(levels.labels);
    out.group = std::move(levels.code);
    return out;
}

// ------------------------------------------------------------------ execution

namespace {

bool present(const DataTable& t, const std::string& name, std::size_t i) { return !t.column(name).is_missing(i); }

struct Grouped {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> values;
    std::vector<std::vector<std::size_t>> rows;
    std::size_t excluded = 0;
};

Grouped group_values(const DataTable& table, const Binding& groups, const std::vector<std::string>& value_columns) {
    const GroupSplit split = split_groups(groups, table);
    Grouped g;
    g.labels = split.labels;
    g.values.resize(split.labels.size());
    g.rows.resize(split.labels.size());
    const Column& v = table.column(value_columns.front());
    for (std::size_t i = 0; i < table.n_rows(); ++i) {
        bool ok = split.group[i] >= 0;
        for (const auto& c : value_columns) ok = ok && present(table, c, i);
        if (!ok) {
            ++g.excluded;
            continue;
        }
        g.values[split.group[i]].push_back(v.number(i));
        g.rows[split.group[i]].push_back(i);
    }
    for (std::size_t k = 0; k < g.values.size(); ++k) {
        if (g.values[k].empty()) fail(ErrorKind::data, "group " + quote(g.labels[k]) + " has no usable rows");
    }
    return g;
}

json per_group(const Grouped& g, double (*stat)(const std::vector<double>&)) {
    json out = json::object();
    for (std::size_t k = 0; k < g.labels.size(); ++k) out[g.labels[k]] = stat(g.values[k]);
    return out;
}

double mean_of(const std::vector<double>& x) { return stats::mean(x); }
double median_of(const std::vector<double>& x) { return stats::median(x); }
double variance_of(const std::vector<double>& x) { return x.size() > 1 ? stats::variance(x) : 0.0; }

json sizes(const Grouped& g) {
    json out = json::object();
    for (std::size_t k = 0; k < g.labels.size(); ++k) out[g.labels[k]] = g.values[k].size();
    return out;
}

void add_difference(json& details, const json& by_group, const Grouped& g, const char* key) {
    if (g.labels.size() != 2) return;
    const double a = by_group[g.labels[0]].get<double>();
    const double b = by_group[g.labels[1]].get<double>();
    details[std::string(key) + "_difference"] = a - b;
    if (b != 0.0) details["relative_difference"] = a / b - 1.0;
}

/// Complete-case rows of the listed numeric columns.
std::pair<Matrix, std::vector<std::size_t>> complete_rows(const DataTable& table, const std::vector<std::string>& names) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < table.n_rows(); ++i) {
        if (std::all_of(names.begin(), names.end(), [&](const std::string& c) { return present(table, c, i); })) rows.push_back(i);
    }
    Matrix m(rows.size(), names.size());
    for (std::size_t j = 0; j < names.size(); ++j) {
        const Column& c = table.column(names[j]);
        for (std::size_t r = 0; r < rows.size(); ++r) m(r, j) = c.number(rows[r]);
    }
    return {std::move(m), std::move(rows)};
}

void standardize(Matrix& m) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
        const std::vector<double> col = m.column(j);
        const double mu = stats::mean(col);
        const double sd = col.size() > 1 ? std::sqrt(stats::variance(col)) : 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r) m(r, j) = sd > 0.0 ? (m(r, j) - mu) / sd : 0.0;
    }
}

/// Values of `value` ordered by `order_by` (stable), or in row order.
std::vector<double> ordered_series(const DataTable& table, const std::string& value, const Binding* order_by,
                                   std::vector<double>* order_values, std::size_t& excluded) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < table.n_rows(); ++i) {
        if (present(table, value, i) && (!order_by || present(table, order_by->column, i))) {
            rows.push_back(i);
        } else {
            ++excluded;
        }
    }
    if (order_by) {
        const Column& o = table.column(order_by->column);
        std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return o.number(a) < o.number(b); });
    }
    const Column& v = table.column(value);
    std::vector<double> out;
    for (std::size_t i : rows) {
        out.push_back(v.number(i));
        if (order_values) order_values->push_back(order_by ? table.column(order_by->column).number(i) : static_cast<double>(i));
    }
    return out;
}

TestOutcome descriptive(bool criterion, double statistic, std::size_t used, std::size_t excluded) {
    TestOutcome o;
    o.criterion = criterion;
    o.result.statistic = statistic;
    o.result.p_value = criterion ? 0.0 : 1.0;
    o.result.n_used = used;
    o.result.n_excluded = excluded;
    return o;
}

TestOutcome run_doc(const HypothesisDoc& doc, const DataTable& table, std::uint64_t seed) {
    const TestPlan& t = doc.test;
    auto col = [&](const char* name) { return t.binding(name)->column; };
    TestOutcome out;
    switch (t.kind) {
        case TestKind::proportion_comparison: {
            const std::string outcome = col("outcome");
            const Grouped g = group_values(table, *t.binding("group_by"), {outcome});
            const Column& oc = table.column(outcome);
            Levels levels = column_levels(oc, kMaxGroupLevels, "outcome");
            if (levels.labels.size() < 2) fail(ErrorKind::data, "outcome " + quote(outcome) + " has a single level");
            std::vector<std::vector<double>> counts(g.labels.size(), std::vector<double>(levels.labels.size(), 0.0));
            for (std::size_t k = 0; k < g.rows.size(); ++k) {
                for (std::size_t i : g.rows[k]) counts[k][levels.code[i]] += 1.0;
            }
            out.result = stats::chi_square_independence(counts, t.param("yates").get<bool>());
            out.result.n_excluded = g.excluded;
            out.details["group_sizes"] = sizes(g);
            out.details["outcome_levels"] = levels.labels;
            if (levels.labels.size() == 2) {
                const std::string positive = levels.labels.back();
                json rates = json::object();
                for (std::size_t k = 0; k < g.labels.size(); ++k) {
                    rates[g.labels[k]] = counts[k][1] / static_cast<double>(g.rows[k].size());
                }
                out.details["positive_level"] = positive;
                out.details["rates"] = rates;
                add_difference(out.details, rates, g, "rate");
            }
            break;
        }
        case TestKind::mean_comparison:
        case TestKind::median_comparison:
        case TestKind::distribution_comparison: {
            const Grouped g = group_values(table, *t.binding("group_by"), {col("value")});
            if (t.kind == TestKind::mean_comparison) {
                const auto variant = t.param("variant").get<std::string>() == "pooled" ? stats::TTestVariant::pooled
                                                                                          : stats::TTestVariant::welch;
                out.result = stats::t_test(g.values[0], g.values[1], variant);
            } else if (t.kind == TestKind::median_comparison) {
                out.result = stats::mann_whitney_u(g.values[0], g.values[1]);
            } else {
                out.result = stats::ks_test(g.values[0], g.values[1]);
            }
            out.result.n_excluded = g.excluded;
            out.details["group_sizes"] = sizes(g);
            const json means = per_group(g, mean_of);
            const json medians = per_group(g, median_of);
            out.details["means"] = means;
            out.details["medians"] = medians;
            if (t.kind == TestKind::median_comparison) {
                add_difference(out.details, medians, g, "median");
            } else {
                add_difference(out.details, means, g, "mean");
            }
            break;
        }
        case TestKind::variance_comparison:
        case TestKind::anova: {
            const Grouped g = group_values(table, *t.binding("group_by"), {col("value")});
            if (t.kind == TestKind::anova) {
                out.result = stats::one_way_anova(g.values);
            } else {
                const auto center = t.param("center").get<std::string>() == "mean" ? stats::LeveneCenter::mean
                                                                                    : stats::LeveneCenter::median;
                out.result = stats::levene_test(g.values, center);
            }
            out.result.n_excluded = g.excluded;
            out.details["group_sizes"] = sizes(g);
            out.details["means"] = per_group(g, mean_of);
            out.details["variances"] = per_group(g, variance_of);
            break;
        }
        case TestKind::correlation:
        case TestKind::regression: {
            const std::string x = col("x"), y = col("y");
            std::vector<double> xs, ys;
            std::size_t excluded = 0;
            for (std::size_t i = 0; i < table.n_rows(); ++i) {
                if (!present(table, x, i) || !present(table, y, i)) {
                    ++excluded;
                    continue;
                }
                xs.push_back(table.column(x).number(i));
                ys.push_back(table.column(y).number(i));
            }
            if (t.kind == TestKind::correlation) {
                out.result = stats::pearson_test(xs, ys);
                out.details["r"] = out.result.effect.value_or(out.result.statistic);
            } else {
                const auto fit = stats::regression_slope_test(xs, ys);
                out.result = fit.test;
                out.details["slope"] = fit.slope;
                out.details["intercept"] = fit.intercept;
                out.details["slope_se"] = fit.slope_se;
            }
            out.result.n_excluded = excluded;
            break;
        }
        case TestKind::normality: {
            const Column& v = table.column(col("value"));
            std::vector<double> xs = v.present_numbers();
            out.result = stats::shapiro_wilk(xs);
            out.result.n_excluded = v.missing_count();
            out.details["mean"] = stats::mean(xs);
            out.details["sd"] = xs.size() > 1 ? std::sqrt(stats::variance(xs)) : 0.0;
            break;
        }
        case TestKind::trend: {
            std::size_t excluded = 0;
            const auto series = ordered_series(table, col("value"), t.binding("order_by"), nullptr, excluded);
            const auto fit = stats::trend_test(series);
            out.result = fit.test;
            out.result.n_excluded = excluded;
            out.details["slope_per_step"] = fit.slope;
            break;
        }
        case TestKind::change_point: {
            std::size_t excluded = 0;
            std::vector<double> order;
            const auto series = ordered_series(table, col("value"), t.binding("order_by"), &order, excluded);
            const auto cp = stats::cusum_change_point(series, seed, t.param("permutations").get<int>(), doc.alpha);
            out.result.statistic = cp.statistic;
            out.result.p_value = cp.p_value;
            out.result.n_used = series.size();
            out.result.n_excluded = excluded;
            out.details["index"] = cp.index;
            if (cp.index < order.size()) out.details["order_value"] = order[cp.index];
            const std::span<const double> s(series);
            if (cp.index > 0 && cp.index < series.size()) {
                out.details["mean_before"] = stats::mean(s.first(cp.index));
                out.details["mean_after"] = stats::mean(s.subspan(cp.index));
            }
            break;
        }
        case TestKind::survival: {
            const std::string duration = col("duration"), event = col("event");
            const Grouped g = group_values(table, *t.binding("group_by"), {duration, event});
            std::vector<stats::SurvivalGroup> groups(g.labels.size());
            json medians = json::object(), event_rates = json::object();
            for (std::size_t k = 0; k < g.labels.size(); ++k) {
                double events = 0.0;
                for (std::size_t i : g.rows[k]) {
                    groups[k].durations.push_back(table.column(duration).number(i));
                    groups[k].events.push_back(table.column(event).number(i) != 0.0);
                    events += groups[k].events.back() ? 1.0 : 0.0;
                }
                event_rates[g.labels[k]] = events / static_cast<double>(g.rows[k].size());
                const auto km = stats::kaplan_meier(groups[k].durations, groups[k].events);
                json median = nullptr;
                for (std::size_t s = 0; s < km.times.size(); ++s) {
                    if (km.survival[s] <= 0.5) {
                        median = km.times[s];
                        break;
                    }
                }
                medians[g.labels[k]] = median;
            }
            out.result = stats::log_rank(groups);
            out.result.n_excluded = g.excluded;
            out.details["group_sizes"] = sizes(g);
            out.details["event_rates"] = event_rates;
            out.details["median_survival"] = medians;
            break;
        }
        case TestKind::outlier_scan: {
            const auto& names = t.binding("columns")->columns;
            auto [m, rows] = complete_rows(table, names);
            const std::string method = t.param("method").get<std::string>();
            std::vector<bool> flag(rows.size(), false);
            json per_column = json::object();
            if (method == "mahalanobis") {
                flag = stats::outliers_mahalanobis(m, t.param("probability").get<double>());
            } else {
                for (std::size_t j = 0; j < names.size(); ++j) {
                    const std::vector<double> x = m.column(j);
                    const auto f = method == "zscore" ? stats::outliers_zscore(x, t.param("z").get<double>())
                                                      : stats::outliers_iqr(x, t.param("k").get<double>());
                    std::size_t count = 0;
                    for (std::size_t r = 0; r < f.size(); ++r) {
                        if (f[r]) {
                            flag[r] = true;
                            ++count;
                        }
                    }
                    per_column[names[j]] = count;
                }
            }
            const auto count = static_cast<std::size_t>(std::count(flag.begin(), flag.end(), true));
            out = descriptive(count > 0, static_cast<double>(count), rows.size(), table.n_rows() - rows.size());
            out.result.effect = rows.empty() ? 0.0 : static_cast<double>(count) / static_cast<double>(rows.size());
            out.details["flagged"] = count;
            out.details["method"] = method;
            if (!per_column.empty()) out.details["per_column"] = per_column;
            std::vector<bool> values(table.n_rows(), false);
            std::vector<std::uint8_t> missing(table.n_rows(), 1);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                values[rows[r]] = flag[r];
                missing[rows[r]] = 0;
            }
            out.attachments.push_back(Column::boolean("hyp_" + doc.id, values, std::move(missing)));
            break;
        }
        case TestKind::anomaly_scan: {
            const auto& names = t.binding("columns")->columns;
            auto [m, rows] = complete_rows(table, names);
            if (rows.size() < 2) fail(ErrorKind::data, "anomaly_scan needs at least two complete rows");
            const auto forest = stats::IsolationForest::fit(m, seed, static_cast<std::size_t>(t.param("trees").get<int>()));
            const std::vector<double> scores = forest.score(m);
            const double threshold = t.param("threshold").get<double>();
            const auto count = static_cast<std::size_t>(
                std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= threshold; }));
            out = descriptive(count > 0, static_cast<double>(count), rows.size(), table.n_rows() - rows.size());
            out.details["flagged"] = count;
            out.details["max_score"] = *std::max_element(scores.begin(), scores.end());
            std::vector<double> values(table.n_rows(), 0.0);
            std::vector<std::uint8_t> missing(table.n_rows(), 1);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                values[rows[r]] = scores[r];
                missing[rows[r]] = 0;
            }
            out.attachments.push_back(Column::numeric("hyp_" + doc.id + "_anomaly_score", std::move(values), std::move(missing)));
            break;
        }
        case TestKind::clustering: {
            const auto& names = t.binding("columns")->columns;
            auto [m, rows] = complete_rows(table, names);
            const auto k = static_cast<std::size_t>(t.param("k").get<int>());
            if (rows.size() <= k) fail(ErrorKind::data, "clustering needs more complete rows than clusters");
            standardize(m);
            const auto model = stats::kmeans(m, k, seed);
            const auto stability = stats::cluster_stability(m, k, derive_seed(seed, "stability"),
                                                            t.param("resamples").get<int>(), t.param("stability").get<double>());
            out = descriptive(stability.stable, stability.mean_ari, rows.size(), table.n_rows() - rows.size());
            out.details["mean_ari"] = stability.mean_ari;
            std::vector<std::size_t> cluster_sizes(k, 0);
            for (std::size_t a : model.assignments) ++cluster_sizes[a];
            out.details["cluster_sizes"] = cluster_sizes;
            const auto importance = stats::cluster_feature_importance(m, model.assignments, k);
            json imp = json::object();
            for (std::size_t j = 0; j < names.size(); ++j) imp[names[j]] = importance[j];
            out.details["feature_importance"] = imp;
            std::vector<double> values(table.n_rows(), 0.0);
            std::vector<std::uint8_t> missing(table.n_rows(), 1);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                values[rows[r]] = static_cast<double>(model.assignments[r]);
                missing[rows[r]] = 0;
            }
            out.attachments.push_back(Column::numeric("hyp_" + doc.id + "_cluster_id", std::move(values), std::move(missing)));
            break;
        }
        case TestKind::latent_structure: {
            const auto& names = t.binding("columns")->columns;
            auto [m, rows] = complete_rows(table, names);
            if (rows.size() < 3) fail(ErrorKind::data, "latent_structure needs at least three complete rows");
            standardize(m);
            const auto proj = stats::pca(m, t.param("variance_target").get<double>());
            const std::size_t kept = proj.components.rows();
            out = descriptive(kept < names.size(), static_cast<double>(kept), rows.size(), table.n_rows() - rows.size());
            out.details["components"] = kept;
            out.details["explained_variance_ratio"] = proj.explained_variance_ratio;
            break;
        }
    }
    return out;
}

}  // namespace

ExecutableTest compile(const HypothesisDoc& doc, const DataTable& table) {
    std::vector<std::string> issues = check_schema(doc, table);
    if (!issues.empty()) throw ValidationError(std::move(issues));
    const KindSpec& spec = spec_of(doc.test.kind);
    ExecutableTest exe;
    exe.id = doc.id;
    exe.kind = doc.test.kind;
    exe.operation = spec.op;
    for (const auto& [name, b] : doc.test.bindings) {
        std::vector<std::string> cols = b.condition ? referenced_columns(*b.condition)
                                        : b.form == BindingForm::columns ? b.columns
                                                                         : std::vector<std::string>{b.column};
        for (auto& c : cols) {
            if (std::find(exe.columns.begin(), exe.columns.end(), c) == exe.columns.end()) exe.columns.push_back(c);
        }
    }
    if (doc.test.kind == TestKind::outlier_scan) {
        const std::string method = doc.test.param("method").get<std::string>();
        exe.operation = "outliers_" + method;
        if (method == "mahalanobis" && doc.test.binding("columns")->columns.size() < 2) {
            issues.push_back("mahalanobis outlier_scan needs at least two columns");
        }
    }
    if (const Binding* g = doc.test.binding("group_by"); g && spec.min_levels) {
        collect(issues, [&] {
            const GroupSplit split = split_groups(*g, table);
            std::vector<std::size_t> used(split.labels.size(), 0);
            for (int k : split.group) {
                if (k >= 0) ++used[k];
            }
            const auto levels = static_cast<std::size_t>(std::count_if(used.begin(), used.end(), [](std::size_t u) { return u > 0; }));
            const std::size_t max_levels = spec.max_levels ? spec.max_levels : kMaxGroupLevels;
            if (levels < spec.min_levels || levels > max_levels) {
                std::string expected = spec.min_levels == max_levels ? std::to_string(max_levels)
                                                                     : std::to_string(spec.min_levels) + ".." + std::to_string(max_levels);
                issues.push_back(std::string(spec.name) + " needs " + expected + " group levels, found " + std::to_string(levels));
            }
        });
    }
    if (const Binding* o = doc.test.binding("outcome")) {
        collect(issues, [&] { column_levels(table.column(o->column), kMaxGroupLevels, "outcome"); });
    }
    if (const Binding* e = doc.test.binding("event")) {
        const Column& c = table.column(e->column);
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (!c.is_missing(i) && c.number(i) != 0.0 && c.number(i) != 1.0) {
                issues.push_back("event column " + quote(c.name()) + " must hold 0/1 values");
                break;
            }
        }
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
    exe.run = [doc](const DataTable& t, std::uint64_t seed) { return run_doc(doc, t, seed); };
    return exe;
}

}  // namespace autods::hypothesis
