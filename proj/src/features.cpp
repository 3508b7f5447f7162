#include "autods/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

#include "autods/error.hpp"
#include "autods/linalg.hpp"
#include "autods/parallel.hpp"
#include "autods/stats/multivariate.hpp"

namespace autods::features {

using nlohmann::json;

namespace {

const std::set<std::string> kFunctions = {"log", "log1p", "sqrt", "abs", "tan", "sin", "cos", "rank_pct"};

// ------------------------------------------------------------------ lexer

struct Token {
    enum class Type { number, ident, column, op, lparen, rparen, end };
    Type type = Type::end;
    std::string text;
    double value = 0.0;
    std::size_t offset = 0;
};

[[noreturn]] void syntax(std::string_view src, std::size_t at, const std::string& what) {
    throw ValidationError({"malformed formula '" + std::string(src) + "' at offset " + std::to_string(at) + ": " + what});
}

std::vector<Token> lex(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    auto is_ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
    auto is_ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; };
    while (i < s.size()) {
        const char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        Token t;
        t.offset = i;
        if (c == '(' || c == ')') {
            t.type = c == '(' ? Token::Type::lparen : Token::Type::rparen;
            t.text = std::string(1, c);
            ++i;
        } else if (s.substr(i, 2) == "**") {
            t.type = Token::Type::op, t.text = "^", i += 2;
        } else if (c == '+' || c == '-' || c == '*' || c == '/' || c == '^') {
            t.type = Token::Type::op, t.text = std::string(1, c), ++i;
        } else if (s.substr(i, 3) == "\xE2\x88\x92") {  // minus sign
            t.type = Token::Type::op, t.text = "-", i += 3;
        } else if (s.substr(i, 2) == "\xC3\x97") {  // times
            t.type = Token::Type::op, t.text = "*", i += 2;
        } else if (s.substr(i, 2) == "\xC3\xB7") {  // division sign
            t.type = Token::Type::op, t.text = "/", i += 2;
        } else if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
            std::size_t j = i;
            while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
            if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
                if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
                    while (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) ++k;
                    j = k;
                }
            }
            const auto r = std::from_chars(s.data() + i, s.data() + j, t.value);
            if (r.ec != std::errc() || r.ptr != s.data() + j) syntax(s, i, "bad number");
            t.type = Token::Type::number;
            t.text = std::string(s.substr(i, j - i));
            i = j;
        } else if (c == '`') {
            const std::size_t close = s.find('`', i + 1);
            if (close == std::string_view::npos) syntax(s, i, "unterminated `column`");
            if (close == i + 1) syntax(s, i, "empty column name");
            t.type = Token::Type::column;
            t.text = std::string(s.substr(i + 1, close - i - 1));
            i = close + 1;
        } else if (is_ident_start(c)) {
            std::size_t j = i;
            while (j < s.size() && is_ident(s[j])) ++j;
            t.type = Token::Type::ident;
            t.text = std::string(s.substr(i, j - i));
            i = j;
        } else {
            syntax(s, i, std::string("unexpected character '") + c + "'");
        }
        out.push_back(std::move(t));
    }
    Token end;
    end.offset = s.size();
    out.push_back(end);
    return out;
}

// ------------------------------------------------------------------ parser

class Parser {
public:
    Parser(std::string_view src) : src_(src), toks_(lex(src)) {}

    Formula parse() {
        Formula f = sum();
        if (peek().type != Token::Type::end) syntax(src_, peek().offset, "unexpected '" + peek().text + "'");
        return f;
    }

private:
    const Token& peek() const { return toks_[pos_]; }
    const Token& next() { return toks_[pos_++]; }
    bool at_op(const char* op) const { return peek().type == Token::Type::op && peek().text == op; }

    Formula sum() {
        Formula f = product();
        while (at_op("+") || at_op("-")) {
            const bool add = next().text == "+";
            f = Formula::binary(add ? Formula::Node::add : Formula::Node::sub, std::move(f), product());
        }
        return f;
    }
    Formula product() {
        Formula f = unary();
        while (at_op("*") || at_op("/")) {
            const bool mul = next().text == "*";
            f = Formula::binary(mul ? Formula::Node::mul : Formula::Node::div, std::move(f), unary());
        }
        return f;
    }
    Formula unary() {
        if (at_op("-")) {
            next();
            return Formula::negate(unary());
        }
        return power();
    }
    Formula power() {
        Formula base = atom();
        if (at_op("^")) {
            next();
            return Formula::binary(Formula::Node::pow, std::move(base), unary());
        }
        return base;
    }
    Formula atom() {
        const Token& t = next();
        switch (t.type) {
            case Token::Type::number: return Formula::constant(t.value);
            case Token::Type::column: return Formula::column(t.text);
            case Token::Type::ident: {
                if (peek().type == Token::Type::lparen) {
                    if (!kFunctions.count(t.text)) syntax(src_, t.offset, "unknown function '" + t.text + "'");
                    next();
                    Formula arg = sum();
                    if (peek().type != Token::Type::rparen) syntax(src_, peek().offset, "expected ')'");
                    next();
                    return Formula::call(t.text, std::move(arg));
                }
                return Formula::column(t.text);
            }
            case Token::Type::lparen: {
                Formula f = sum();
                if (peek().type != Token::Type::rparen) syntax(src_, peek().offset, "expected ')'");
                next();
                return f;
            }
            case Token::Type::end: syntax(src_, t.offset, "unexpected end of formula");
            default: syntax(src_, t.offset, "unexpected '" + t.text + "'");
        }
    }

    std::string_view src_;
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

int precedence(const Formula& f) {
    switch (f.node) {
        case Formula::Node::add:
        case Formula::Node::sub: return 1;
        case Formula::Node::mul:
        case Formula::Node::div: return 2;
        case Formula::Node::neg: return 3;
        case Formula::Node::pow: return 4;
        default: return 5;
    }
}

bool bare_name(const std::string& s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; });
}

std::string number_text(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string wrap(const std::string& s, bool parens) { return parens ? "(" + s + ")" : s; }

// ------------------------------------------------------------------ evaluation

double apply_call(const std::string& fn, double x) {
    if (fn == "log") return x > 0.0 ? std::log(x) : NAN;
    if (fn == "log1p") return x > -1.0 ? std::log1p(x) : NAN;
    if (fn == "sqrt") return x >= 0.0 ? std::sqrt(x) : NAN;
    if (fn == "abs") return std::abs(x);
    if (fn == "tan") return std::abs(std::cos(x)) < 1e-12 ? NAN : std::tan(x);
    if (fn == "sin") return std::sin(x);
    if (fn == "cos") return std::cos(x);
    return NAN;
}

void finish(Values& v) {
    for (std::size_t i = 0; i < v.value.size(); ++i) {
        if (v.missing[i] || !std::isfinite(v.value[i])) {
            v.missing[i] = 1;
            v.value[i] = 0.0;
        }
    }
}

std::vector<double> sorted_present(const Values& v) {
    std::vector<double> out;
    for (std::size_t i = 0; i < v.value.size(); ++i)
        if (!v.missing[i]) out.push_back(v.value[i]);
    std::sort(out.begin(), out.end());
    return out;
}

// ------------------------------------------------------------------ generators

std::string key_of(const Column& c, std::size_t r) {
    if (c.kind() == ColumnKind::categorical) return c.text(r);
    if (c.kind() == ColumnKind::boolean) return c.truth(r) ? "true" : "false";
    return number_text(c.number(r));
}

double reduce(const std::string& stat, const std::vector<double>& xs) {
    if (xs.empty()) return NAN;
    if (stat == "count") return static_cast<double>(xs.size());
    if (stat == "min") return *std::min_element(xs.begin(), xs.end());
    if (stat == "max") return *std::max_element(xs.begin(), xs.end());
    const double sum = std::accumulate(xs.begin(), xs.end(), 0.0);
    if (stat == "sum") return sum;
    const double m = sum / static_cast<double>(xs.size());
    if (stat == "mean") return m;
    if (xs.size() < 2) return NAN;
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));  // std
}

const Column& numeric_column(const DataTable& t, const std::string& name) {
    const Column& c = t.column(name);
    if (c.kind() == ColumnKind::categorical || c.kind() == ColumnKind::datetime)
        fail(ErrorKind::schema, "column '" + name + "' is " + to_string(c.kind()) + ", not numeric");
    return c;
}

// Rows ordered by the datetime column (missing last), or table order.
std::vector<std::size_t> row_order(const DataTable& t, const std::string& order_by) {
    std::vector<std::size_t> order(t.n_rows());
    std::iota(order.begin(), order.end(), 0);
    if (order_by.empty()) return order;
    const Column& d = t.column(order_by);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (d.is_missing(a) != d.is_missing(b)) return d.is_missing(b);
        return !d.is_missing(a) && d.number(a) < d.number(b);
    });
    return order;
}

Matrix complete_rows(const DataTable& t, const std::vector<std::string>& cols) {
    std::vector<const Column*> cs;
    for (const auto& c : cols) cs.push_back(&numeric_column(t, c));
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
        bool ok = true;
        for (const auto* c : cs) ok = ok && !c->is_missing(r);
        if (!ok) continue;
        std::vector<double> row;
        for (const auto* c : cs) row.push_back(c->number(r));
        rows.push_back(std::move(row));
    }
    return Matrix::from_rows(rows);
}

Values compute(const FeatureSpec& s, const DataTable& t) {
    const std::size_t n = t.n_rows();
    Values v{std::vector<double>(n, 0.0), std::vector<std::uint8_t>(n, 0)};
    switch (s.generator) {
        case Generator::formula:
            return evaluate(*s.formula, t);
        case Generator::interaction: {
            std::fill(v.value.begin(), v.value.end(), 1.0);
            for (const auto& name : s.columns) {
                const Column& c = numeric_column(t, name);
                for (std::size_t r = 0; r < n; ++r) {
                    if (c.is_missing(r)) v.missing[r] = 1;
                    v.value[r] *= c.number(r);
                }
            }
            break;
        }
        case Generator::aggregate: {
            const Column& g = t.column(s.columns[0]);
            for (std::size_t r = 0; r < n; ++r) {
                if (g.is_missing(r)) {
                    v.missing[r] = 1;
                    continue;
                }
                const auto it = s.group_values.find(key_of(g, r));
                v.value[r] = it == s.group_values.end() ? s.fallback : it->second;
            }
            break;
        }
        case Generator::lag:
        case Generator::rolling: {
            const Column& c = numeric_column(t, s.columns[0]);
            const auto order = row_order(t, s.order_by);
            const std::size_t w = s.generator == Generator::lag ? static_cast<std::size_t>(s.lag) : static_cast<std::size_t>(s.window);
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t r = order[k];
                if (s.generator == Generator::lag) {
                    if (k < w || c.is_missing(order[k - w])) {
                        v.missing[r] = 1;
                    } else {
                        v.value[r] = c.number(order[k - w]);
                    }
                    continue;
                }
                if (k + 1 < w) {
                    v.missing[r] = 1;
                    continue;
                }
                std::vector<double> xs;
                bool ok = true;
                for (std::size_t j = k + 1 - w; j <= k; ++j) {
                    ok = ok && !c.is_missing(order[j]);
                    xs.push_back(c.number(order[j]));
                }
                if (!ok) {
                    v.missing[r] = 1;
                } else {
                    v.value[r] = reduce(s.stat, xs);
                }
            }
            break;
        }
        case Generator::pca: {
            std::vector<const Column*> cs;
            for (const auto& name : s.columns) cs.push_back(&numeric_column(t, name));
            for (std::size_t r = 0; r < n; ++r) {
                double score = 0.0;
                for (std::size_t j = 0; j < cs.size(); ++j) {
                    if (cs[j]->is_missing(r)) v.missing[r] = 1;
                    score += s.loading[j] * (cs[j]->number(r) - s.means[j]) / s.scales[j];
                }
                v.value[r] = score;
            }
            break;
        }
    }
    finish(v);
    return v;
}

double pearson(const Values& a, const std::vector<double>& b, const std::vector<std::uint8_t>& b_missing) {
    double sa = 0, sb = 0, n = 0;
    for (std::size_t r = 0; r < a.value.size(); ++r)
        if (!a.missing[r] && !b_missing[r]) sa += a.value[r], sb += b[r], n += 1;
    if (n < 3) return NAN;
    const double ma = sa / n, mb = sb / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t r = 0; r < a.value.size(); ++r) {
        if (a.missing[r] || b_missing[r]) continue;
        const double da = a.value[r] - ma, db = b[r] - mb;
        sab += da * db, saa += da * da, sbb += db * db;
    }
    if (!(saa > 0) || !(sbb > 0)) return NAN;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

Values column_values(const Column& c) {
    Values v{std::vector<double>(c.numbers().begin(), c.numbers().end()),
             std::vector<std::uint8_t>(c.missing_mask().begin(), c.missing_mask().end())};
    return v;
}

// 0/1 indicator columns of the target: one for numeric/boolean/two-level targets, one per level otherwise
std::vector<Values> target_views(const Column& t) {
    if (t.kind() != ColumnKind::categorical) {
        if (t.kind() == ColumnKind::datetime) fail(ErrorKind::config, "target '" + t.name() + "' is a datetime column");
        return {column_values(t)};
    }
    std::set<std::string> levels;
    for (std::size_t r = 0; r < t.size(); ++r)
        if (!t.is_missing(r)) levels.insert(t.text(r));
    std::vector<std::string> use(levels.begin(), levels.end());
    if (use.size() == 2) use.erase(use.begin());
    std::vector<Values> out;
    for (const auto& level : use) {
        Values v{std::vector<double>(t.size(), 0.0), std::vector<std::uint8_t>(t.missing_mask().begin(), t.missing_mask().end())};
        for (std::size_t r = 0; r < t.size(); ++r) v.value[r] = !t.is_missing(r) && t.text(r) == level ? 1.0 : 0.0;
        out.push_back(std::move(v));
    }
    return out;
}

std::string describe(const FeatureSpec& s) {
    auto list = [](const std::vector<std::string>& xs, const char* sep) {
        std::string out;
        for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? sep : "") + xs[i];
        return out;
    };
    switch (s.generator) {
        case Generator::formula: return to_string(*s.formula);
        case Generator::interaction: return list(s.columns, " * ");
        case Generator::aggregate: return s.stat + "(" + s.columns[1] + ") by " + s.columns[0];
        case Generator::lag: return "lag(" + s.columns[0] + ", " + std::to_string(s.lag) + ")" + (s.order_by.empty() ? "" : " order by " + s.order_by);
        case Generator::rolling:
            return "rolling_" + s.stat + "(" + s.columns[0] + ", " + std::to_string(s.window) + ")" +
                   (s.order_by.empty() ? "" : " order by " + s.order_by);
        case Generator::pca: return "pca component " + std::to_string(s.component + 1) + " of " + list(s.columns, ", ");
    }
    return "";
}

FeatureSpec formula_spec(std::string name, const std::string& text) {
    FeatureSpec s;
    s.name = std::move(name);
    s.generator = Generator::formula;
    s.formula = parse_formula(text);
    return s;
}

std::string column_ref(const std::string& col) { return bare_name(col) && !kFunctions.count(col) ? col : "`" + col + "`"; }

}  // namespace

// ------------------------------------------------------------------ formula API

Formula Formula::column(std::string name) {
    Formula f;
    f.node = Node::column;
    f.name = std::move(name);
    return f;
}
Formula Formula::constant(double v) {
    Formula f;
    f.node = Node::constant;
    f.value = v;
    return f;
}
Formula Formula::binary(Node op, Formula a, Formula b) {
    Formula f;
    f.node = op;
    f.args = {std::move(a), std::move(b)};
    return f;
}
Formula Formula::call(std::string fn, Formula arg) {
    Formula f;
    f.node = Node::call;
    f.name = std::move(fn);
    f.args = {std::move(arg)};
    return f;
}
Formula Formula::negate(Formula a) {
    Formula f;
    f.node = Node::neg;
    f.args = {std::move(a)};
    return f;
}

Formula parse_formula(std::string_view text) { return Parser(text).parse(); }

std::string to_string(const Formula& f) {
    using N = Formula::Node;
    switch (f.node) {
        case N::column: return column_ref(f.name);
        case N::constant: return f.value < 0 || std::signbit(f.value) ? "(" + number_text(f.value) + ")" : number_text(f.value);
        case N::neg: return "-" + wrap(to_string(f.args[0]), precedence(f.args[0]) < 3);
        case N::call: return f.name + "(" + to_string(f.args[0]) + ")";
        case N::pow:
            return wrap(to_string(f.args[0]), precedence(f.args[0]) <= 4) + " ^ " + wrap(to_string(f.args[1]), precedence(f.args[1]) < 3);
        default: {
            const int p = precedence(f);
            const char* op = f.node == N::add ? " + " : f.node == N::sub ? " - " : f.node == N::mul ? " * " : " / ";
            return wrap(to_string(f.args[0]), precedence(f.args[0]) < p) + op + wrap(to_string(f.args[1]), precedence(f.args[1]) <= p);
        }
    }
}

std::vector<std::string> referenced_columns(const Formula& f) {
    std::vector<std::string> out;
    auto walk = [&](const Formula& g, auto&& self) -> void {
        if (g.node == Formula::Node::column && std::find(out.begin(), out.end(), g.name) == out.end()) out.push_back(g.name);
        for (const auto& a : g.args) self(a, self);
    };
    walk(f, walk);
    return out;
}

std::vector<std::string> typecheck(const Formula& f, const DataTable& table) {
    std::vector<std::string> issues;
    auto walk = [&](const Formula& g, auto&& self) -> void {
        if (g.node == Formula::Node::column) {
            const Column* c = table.find(g.name);
            if (!c) {
                issues.push_back("unknown column '" + g.name + "'");
            } else if (c->kind() == ColumnKind::categorical || c->kind() == ColumnKind::datetime) {
                issues.push_back("column '" + g.name + "' is " + to_string(c->kind()) + ", not numeric");
            }
        }
        if (g.node == Formula::Node::call && !kFunctions.count(g.name)) issues.push_back("unknown function '" + g.name + "'");
        for (const auto& a : g.args) self(a, self);
    };
    walk(f, walk);
    return issues;
}

double rank_pct(std::span<const double> sorted, double x) {
    if (sorted.empty()) return NAN;
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), x);
    const auto hi = std::upper_bound(lo, sorted.end(), x);
    const double less = static_cast<double>(lo - sorted.begin());
    const double eq = static_cast<double>(hi - lo);
    return (less + (eq + 1.0) / 2.0) / static_cast<double>(sorted.size());
}

Values evaluate(const Formula& f, const DataTable& table) {
    using N = Formula::Node;
    const std::size_t n = table.n_rows();
    Values out{std::vector<double>(n, 0.0), std::vector<std::uint8_t>(n, 0)};
    switch (f.node) {
        case N::column: {
            const Column& c = numeric_column(table, f.name);
            out = column_values(c);
            break;
        }
        case N::constant:
            std::fill(out.value.begin(), out.value.end(), f.value);
            break;
        case N::neg:
            out = evaluate(f.args[0], table);
            for (auto& x : out.value) x = -x;
            break;
        case N::call: {
            out = evaluate(f.args[0], table);
            if (f.name == "rank_pct") {
                const std::vector<double> ref = f.reference.empty() ? sorted_present(out) : f.reference;
                for (std::size_t i = 0; i < n; ++i)
                    if (!out.missing[i]) out.value[i] = rank_pct(ref, out.value[i]);
            } else {
                if (!kFunctions.count(f.name)) throw ValidationError({"unknown function '" + f.name + "'"});
                for (auto& x : out.value) x = apply_call(f.name, x);
            }
            break;
        }
        default: {
            Values a = evaluate(f.args[0], table);
            const Values b = evaluate(f.args[1], table);
            for (std::size_t i = 0; i < n; ++i) {
                a.missing[i] = a.missing[i] || b.missing[i];
                const double x = a.value[i], y = b.value[i];
                switch (f.node) {
                    case N::add: a.value[i] = x + y; break;
                    case N::sub: a.value[i] = x - y; break;
                    case N::mul: a.value[i] = x * y; break;
                    case N::div: a.value[i] = y == 0.0 ? NAN : x / y; break;
                    default: a.value[i] = std::pow(x, y); break;
                }
            }
            out = std::move(a);
        }
    }
    finish(out);
    return out;
}

Formula fit_formula(Formula f, const DataTable& table) {
    for (auto& a : f.args) a = fit_formula(std::move(a), table);
    if (f.node == Formula::Node::call && f.name == "rank_pct") {
        f.reference.clear();
        f.reference = sorted_present(evaluate(f.args[0], table));
    }
    return f;
}

// ------------------------------------------------------------------ specs

const char* to_string(Generator g) noexcept {
    switch (g) {
        case Generator::formula: return "formula";
        case Generator::interaction: return "interaction";
        case Generator::aggregate: return "aggregate";
        case Generator::lag: return "lag";
        case Generator::rolling: return "rolling";
        case Generator::pca: return "pca";
    }
    return "formula";
}

json to_json(const FeatureSpec& s) {
    json j = {{"name", s.name},          {"generator", to_string(s.generator)}, {"definition", describe(s)},
              {"columns", s.columns},    {"provenance", s.provenance},          {"priority", s.priority},
              {"fitted", s.fitted}};
    switch (s.generator) {
        case Generator::formula: j["formula"] = to_string(*s.formula); break;
        case Generator::aggregate:
            j["stat"] = s.stat;
            j["group_values"] = s.group_values;
            j["fallback"] = s.fallback;
            break;
        case Generator::lag:
            j["lag"] = s.lag;
            j["order_by"] = s.order_by;
            break;
        case Generator::rolling:
            j["stat"] = s.stat;
            j["window"] = s.window;
            j["order_by"] = s.order_by;
            break;
        case Generator::pca:
            j["component"] = s.component;
            j["variance_target"] = s.variance_target;
            j["means"] = s.means;
            j["scales"] = s.scales;
            j["loading"] = s.loading;
            break;
        default: break;
    }
    return j;
}

FeatureSpec feature_from_json(const json& j) {
    try {
        FeatureSpec s;
        s.name = j.at("name").get<std::string>();
        const std::string g = j.at("generator").get<std::string>();
        const Generator all[] = {Generator::formula, Generator::interaction, Generator::aggregate, Generator::lag, Generator::rolling, Generator::pca};
        bool known = false;
        for (auto k : all)
            if (g == to_string(k)) s.generator = k, known = true;
        if (!known) fail(ErrorKind::config, "unknown feature generator '" + g + "'");
        s.columns = j.value("columns", std::vector<std::string>{});
        s.provenance = j.value("provenance", std::vector<std::string>{});
        s.priority = j.value("priority", 1.0);
        s.fitted = j.value("fitted", false);
        if (j.contains("formula")) s.formula = parse_formula(j.at("formula").get<std::string>());
        s.stat = j.value("stat", "mean");
        s.group_values = j.value("group_values", std::map<std::string, double>{});
        s.fallback = j.value("fallback", 0.0);
        s.lag = j.value("lag", 1);
        s.window = j.value("window", 5);
        s.order_by = j.value("order_by", "");
        s.component = j.value("component", std::size_t{0});
        s.variance_target = j.value("variance_target", 0.95);
        s.means = j.value("means", std::vector<double>{});
        s.scales = j.value("scales", std::vector<double>{});
        s.loading = j.value("loading", std::vector<double>{});
        // rank_pct references are not serialized
        if (s.formula && to_string(*s.formula).find("rank_pct(") != std::string::npos) s.fitted = false;
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::config, std::string("malformed feature spec: ") + e.what());
    }
}

FeatureSpec fit_feature(FeatureSpec s, const DataTable& t) {
    switch (s.generator) {
        case Generator::formula: {
            if (!s.formula) fail(ErrorKind::config, "feature '" + s.name + "' has no formula");
            const auto issues = typecheck(*s.formula, t);
            if (!issues.empty()) throw ValidationError(issues);
            s.formula = fit_formula(std::move(*s.formula), t);
            break;
        }
        case Generator::interaction:
            if (s.columns.size() < 2) fail(ErrorKind::config, "interaction '" + s.name + "' needs at least two columns");
            for (const auto& c : s.columns) numeric_column(t, c);
            break;
        case Generator::aggregate: {
            if (s.columns.size() != 2) fail(ErrorKind::config, "aggregate '" + s.name + "' needs a group and a value column");
            const Column& g = t.column(s.columns[0]);
            const Column& v = numeric_column(t, s.columns[1]);
            std::map<std::string, std::vector<double>> groups;
            std::vector<double> all;
            for (std::size_t r = 0; r < t.n_rows(); ++r) {
                if (g.is_missing(r) || v.is_missing(r)) continue;
                groups[key_of(g, r)].push_back(v.number(r));
                all.push_back(v.number(r));
            }
            s.fallback = reduce(s.stat, all);
            if (!std::isfinite(s.fallback)) s.fallback = 0.0;
            s.group_values.clear();
            for (const auto& [k, xs] : groups) {
                const double x = reduce(s.stat, xs);
                s.group_values[k] = std::isfinite(x) ? x : s.fallback;
            }
            break;
        }
        case Generator::lag:
        case Generator::rolling:
            if (s.columns.size() != 1) fail(ErrorKind::config, "feature '" + s.name + "' needs one column");
            numeric_column(t, s.columns[0]);
            if (s.lag < 1 || s.window < 1) fail(ErrorKind::config, "feature '" + s.name + "' needs a positive lag/window");
            if (!s.order_by.empty() && t.column(s.order_by).kind() != ColumnKind::datetime)
                fail(ErrorKind::schema, "order_by column '" + s.order_by + "' is not datetime");
            break;
        case Generator::pca: {
            const Matrix m = complete_rows(t, s.columns);
            if (m.rows() < 2) fail(ErrorKind::domain, "pca feature '" + s.name + "' needs at least two complete rows");
            s.means.assign(m.cols(), 0.0);
            s.scales.assign(m.cols(), 1.0);
            Matrix z = m;
            for (std::size_t j = 0; j < m.cols(); ++j) {
                const auto col = m.column(j);
                const double mu = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
                double ss = 0.0;
                for (double x : col) ss += (x - mu) * (x - mu);
                const double sd = std::sqrt(ss / static_cast<double>(col.size() - 1));
                s.means[j] = mu;
                s.scales[j] = sd > 0 ? sd : 1.0;
                for (std::size_t r = 0; r < m.rows(); ++r) z(r, j) = (m(r, j) - mu) / s.scales[j];
            }
            const auto proj = stats::pca(z, 1.0);
            if (s.component >= proj.components.rows()) fail(ErrorKind::domain, "pca feature '" + s.name + "' asks for a missing component");
            const auto row = proj.components.row(s.component);
            s.loading.assign(row.begin(), row.end());
            // sign convention: largest |loading| positive
            const auto big = std::max_element(s.loading.begin(), s.loading.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
            if (*big < 0)
                for (auto& x : s.loading) x = -x;
            break;
        }
    }
    s.fitted = true;
    return s;
}

DataTable materialize_fitted(const DataTable& table, const std::vector<FeatureSpec>& specs, unsigned threads) {
    std::set<std::string> names;
    for (const auto& s : specs) {
        if (!s.fitted) fail(ErrorKind::config, "feature '" + s.name + "' is not fitted");
        if (s.name.empty()) fail(ErrorKind::config, "feature with an empty name");
        if (table.has_column(s.name) || !names.insert(s.name).second)
            fail(ErrorKind::schema, "feature name '" + s.name + "' collides with an existing column");
    }
    std::vector<std::optional<Column>> cols(specs.size());
    parallel_for(specs.size(), threads, [&](std::size_t i) {
        Values v = compute(specs[i], table);
        cols[i] = Column::numeric(specs[i].name, std::move(v.value), std::move(v.missing));
    });
    std::vector<Column> out;
    for (auto& c : cols) out.push_back(std::move(*c));
    return table.with_columns(std::move(out));
}

DataTable materialize(const DataTable& table, std::vector<FeatureSpec>& specs, unsigned threads) {
    std::set<std::string> names;
    for (const auto& s : specs)
        if (table.has_column(s.name) || !names.insert(s.name).second)
            fail(ErrorKind::schema, "feature name '" + s.name + "' collides with an existing column");
    parallel_for(specs.size(), threads, [&](std::size_t i) {
        if (!specs[i].fitted) specs[i] = fit_feature(std::move(specs[i]), table);
    });
    return materialize_fitted(table, specs, threads);
}

// ------------------------------------------------------------------ candidates

std::vector<FeatureSpec> generate_candidates(const DataTable& table, const std::vector<hypothesis::HypothesisVerdict>& verdicts,
                                             const CandidateOptions& o) {
    if (o.budget < 1) fail(ErrorKind::config, "feature budget must be at least 1");
    std::vector<std::string> base = o.columns;
    if (base.empty()) {
        for (const auto& c : table.columns())
            if (c.kind() == ColumnKind::numeric && c.name() != o.target && c.name().rfind("hyp_", 0) != 0) base.push_back(c.name());
    }
    auto base_index = [&](const std::string& c) -> std::ptrdiff_t {
        const auto it = std::find(base.begin(), base.end(), c);
        return it == base.end() ? -1 : it - base.begin();
    };

    struct Candidate {
        FeatureSpec spec;
        int rank;
    };
    std::vector<Candidate> out;
    auto add = [&](FeatureSpec s, int rank) { out.push_back({std::move(s), rank}); };

    auto pair_specs = [&](const std::string& a0, const std::string& b0, std::vector<std::string> prov, double p) {
        std::string a = a0, b = b0;
        if (base_index(a) > base_index(b)) std::swap(a, b);
        FeatureSpec prod;
        prod.name = a + "_x_" + b;
        prod.generator = Generator::interaction;
        prod.columns = {a, b};
        prod.provenance = prov;
        prod.priority = p;
        add(prod, 0);
        FeatureSpec ratio = formula_spec(a + "_over_" + b, column_ref(a) + " / " + column_ref(b));
        ratio.provenance = prov;
        ratio.priority = p;
        add(ratio, 1);
        FeatureSpec diff = formula_spec(a + "_minus_" + b, column_ref(a) + " - " + column_ref(b));
        diff.provenance = prov;
        diff.priority = p;
        add(diff, 2);
    };

    std::vector<const hypothesis::HypothesisVerdict*> acc;
    for (const auto& v : verdicts)
        if (v.accepted && !v.error && !v.descriptive) acc.push_back(&v);
    std::stable_sort(acc.begin(), acc.end(), [](auto* a, auto* b) { return a->result.p_value < b->result.p_value; });
    std::vector<std::vector<std::string>> implicated(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i)
        for (const auto& c : acc[i]->columns)
            if (base_index(c) >= 0) implicated[i].push_back(c);

    for (std::size_t i = 0; i < acc.size(); ++i) {
        const auto* v = acc[i];
        const double p = v->result.p_value;
        const auto& cols = implicated[i];
        for (std::size_t a = 0; a < cols.size(); ++a)
            for (std::size_t b = a + 1; b < cols.size(); ++b) pair_specs(cols[a], cols[b], {v->doc_id}, p);
        for (std::size_t j = i + 1; j < acc.size(); ++j)
            for (const auto& a : cols)
                for (const auto& b : implicated[j])
                    if (a != b) pair_specs(a, b, {v->doc_id, acc[j]->doc_id}, std::max(p, acc[j]->result.p_value));
        // segments: categorical or boolean group columns read by the verdict
        for (const auto& g : v->columns) {
            const Column* gc = table.find(g);
            if (!gc || g == o.target || g.rfind("hyp_", 0) == 0) continue;
            if (gc->kind() != ColumnKind::categorical && gc->kind() != ColumnKind::boolean) continue;
            std::vector<std::string> values = cols;
            if (std::erase(values, g), values.empty()) values = base;
            for (const auto& val : values) {
                if (val == g) continue;
                for (const char* stat : {"mean", "std"}) {
                    FeatureSpec s;
                    s.name = std::string(stat) + "_" + val + "_by_" + g;
                    s.generator = Generator::aggregate;
                    s.columns = {g, val};
                    s.stat = stat;
                    s.provenance = {v->doc_id};
                    s.priority = p;
                    add(s, 3);
                }
            }
        }
    }

    const auto summaries = summarize(table);
    auto summary_of = [&](const std::string& c) -> const ColumnSummary* {
        for (const auto& s : summaries)
            if (s.name == c) return &s;
        return nullptr;
    };
    for (const auto& c : base) {
        const ColumnSummary* s = summary_of(c);
        if (!s || !s->numeric || s->distinct_count < 3) continue;
        if (std::abs(s->numeric->skewness) <= o.skew_threshold) continue;
        if (s->numeric->min > -1.0) add(formula_spec("log1p_" + c, "log1p(" + column_ref(c) + ")"), 4);
        if (s->numeric->min >= 0.0) add(formula_spec("sqrt_" + c, "sqrt(" + column_ref(c) + ")"), 4);
    }

    std::string order_by;
    for (const auto& c : table.columns())
        if (c.kind() == ColumnKind::datetime) {
            order_by = c.name();
            break;
        }
    if (!order_by.empty()) {
        for (const auto& c : base) {
            FeatureSpec lag;
            lag.name = "lag1_" + c;
            lag.generator = Generator::lag;
            lag.columns = {c};
            lag.order_by = order_by;
            add(lag, 5);
            FeatureSpec roll;
            roll.name = "rolling_mean5_" + c;
            roll.generator = Generator::rolling;
            roll.columns = {c};
            roll.order_by = order_by;
            add(roll, 6);
        }
    }

    // greedy block of mutually correlated columns, in base order
    if (base.size() >= o.pca_min_columns) {
        std::vector<Values> vals;
        for (const auto& c : base) vals.push_back(column_values(table.column(c)));
        std::vector<std::size_t> best;
        for (std::size_t seed = 0; seed < base.size(); ++seed) {
            std::vector<std::size_t> block = {seed};
            for (std::size_t j = 0; j < base.size(); ++j) {
                if (j == seed) continue;
                bool ok = true;
                for (std::size_t k : block) {
                    const double r = pearson(vals[j], vals[k].value, vals[k].missing);
                    ok = ok && std::isfinite(r) && std::abs(r) > o.pca_min_r;
                }
                if (ok) block.push_back(j);
            }
            if (block.size() > best.size()) best = block;
        }
        if (best.size() >= o.pca_min_columns) {
            std::sort(best.begin(), best.end());
            std::vector<std::string> cols;
            for (std::size_t k : best) cols.push_back(base[k]);
            Matrix z = complete_rows(table, cols);
            if (z.rows() > cols.size()) {
                for (std::size_t j = 0; j < z.cols(); ++j) {
                    const auto col = z.column(j);
                    const double mu = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
                    double ss = 0.0;
                    for (double x : col) ss += (x - mu) * (x - mu);
                    const double sd = std::sqrt(ss / static_cast<double>(col.size() - 1));
                    for (std::size_t r = 0; r < z.rows(); ++r) z(r, j) = (z(r, j) - mu) / (sd > 0 ? sd : 1.0);
                }
                const auto proj = stats::pca(z, 0.95);
                for (std::size_t k = 0; k < proj.components.rows(); ++k) {
                    FeatureSpec s;
                    s.name = "pca_" + std::to_string(k + 1);
                    s.generator = Generator::pca;
                    s.columns = cols;
                    s.component = k;
                    add(s, 7);
                }
            }
        }
    }

    if (o.default_products) {
        for (std::size_t a = 0; a < base.size(); ++a)
            for (std::size_t b = a + 1; b < base.size(); ++b) {
                FeatureSpec s;
                s.name = base[a] + "_x_" + base[b];
                s.generator = Generator::interaction;
                s.columns = {base[a], base[b]};
                add(s, 8);
            }
    }

    std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
        if (a.spec.priority != b.spec.priority) return a.spec.priority < b.spec.priority;
        return a.rank < b.rank;
    });
    std::vector<FeatureSpec> specs;
    std::set<std::string> names;
    for (auto& c : out) {
        if (specs.size() >= o.budget) break;
        if (table.has_column(c.spec.name) || !names.insert(c.spec.name).second) continue;
        specs.push_back(std::move(c.spec));
    }
    return specs;
}

// ------------------------------------------------------------------ pruning

std::vector<Ranked> prune(const DataTable& table, const std::vector<FeatureSpec>& specs, const std::string& target,
                          std::size_t max_keep, double dedup_r) {
    if (!table.has_column(target)) fail(ErrorKind::config, "target '" + target + "' not in table");
    const auto views = target_views(table.column(target));
    std::vector<Ranked> ranked;
    std::vector<Values> vals;
    for (const auto& s : specs) {
        const Column& c = table.column(s.name);
        Values v = column_values(c);
        double rel = NAN;
        for (const auto& t : views) {
            const double r = std::abs(pearson(v, t.value, t.missing));
            if (std::isfinite(r) && !(rel >= r)) rel = r;
        }
        if (!std::isfinite(rel)) continue;  // constant or empty
        ranked.push_back({s, rel, c.missing_count()});
        vals.push_back(std::move(v));
    }
    std::vector<std::size_t> order(ranked.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ranked[a].relevance > ranked[b].relevance; });
    std::vector<Ranked> kept;
    std::vector<std::size_t> kept_idx;
    for (std::size_t i : order) {
        if (kept.size() >= max_keep) break;
        bool dup = false;
        for (std::size_t k : kept_idx) {
            const double r = pearson(vals[i], vals[k].value, vals[k].missing);
            if (std::isfinite(r) && std::abs(r) > dedup_r) {
                dup = true;
                break;
            }
        }
        if (dup) continue;
        kept.push_back(ranked[i]);
        kept_idx.push_back(i);
    }
    return kept;
}

FeatureResult engineer(const DataTable& table, const std::vector<hypothesis::HypothesisVerdict>& verdicts,
                       const CandidateOptions& options, std::size_t max_keep, unsigned threads, MetadataLedger* ledger) {
    FeatureResult out;
    out.candidates = generate_candidates(table, verdicts, options);
    std::vector<FeatureSpec> fitted;
    std::vector<std::string> skipped;
    for (auto& s : out.candidates) {
        try {
            fitted.push_back(fit_feature(s, table));
        } catch (const Error& e) {
            skipped.push_back(s.name + ": " + e.what());
        }
    }
    const DataTable wide = materialize_fitted(table, fitted, threads);
    out.kept = prune(wide, fitted, options.target, max_keep);
    std::vector<Column> cols;
    for (const auto& k : out.kept) cols.push_back(wide.column(k.spec.name));
    out.table = table.with_columns(std::move(cols));
    for (const auto& k : out.kept) {
        LedgerEntry e = make_entry("feature", "materialize", {k.spec.name});
        e.params["generator"] = to_string(k.spec.generator);
        e.params["definition"] = describe(k.spec);
        e.results["relevance"] = k.relevance;
        e.results["missing_cells"] = static_cast<std::int64_t>(k.missing_cells);
        for (const auto& id : k.spec.provenance) e.provenance.push_back("hypothesis:" + id);
        record(ledger, std::move(e));
    }
    LedgerEntry summary = make_entry("feature", "prune", {});
    summary.params["target"] = options.target;
    summary.params["budget"] = static_cast<std::int64_t>(options.budget);
    summary.params["max_keep"] = static_cast<std::int64_t>(max_keep);
    summary.results["candidates"] = static_cast<std::int64_t>(out.candidates.size());
    summary.results["kept"] = static_cast<std::int64_t>(out.kept.size());
    summary.results["skipped"] = static_cast<std::int64_t>(skipped.size());
    for (std::size_t i = 0; i < skipped.size(); ++i) summary.results["skipped." + std::to_string(i)] = skipped[i];
    record(ledger, std::move(summary));
    return out;
}

json features_report(const FeatureResult& r) {
    json features = json::array();
    for (const auto& k : r.kept) {
        json j = to_json(k.spec);
        j["relevance"] = k.relevance;
        j["missing_cells"] = k.missing_cells;
        features.push_back(std::move(j));
    }
    return {{"candidates", r.candidates.size()}, {"kept", r.kept.size()}, {"features", std::move(features)}};
}

}  // namespace autods::features
