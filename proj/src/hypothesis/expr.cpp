#include "autods/hypothesis/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>

#include "autods/error.hpp"

namespace autods::hypothesis {

const char* to_string(Comparator c) noexcept {
    switch (c) {
        case Comparator::lt: return "<";
        case Comparator::le: return "<=";
        case Comparator::gt: return ">";
        case Comparator::ge: return ">=";
        case Comparator::eq: return "=";
        case Comparator::ne: return "!=";
    }
    return "?";
}

Expr Expr::column(std::string name) {
    Expr e;
    e.node = Node::column;
    e.name = std::move(name);
    return e;
}

Expr Expr::literal(double v) {
    Expr e;
    e.node = Node::number;
    e.number = v;
    return e;
}

Expr Expr::literal(std::string v) {
    Expr e;
    e.node = Node::text;
    e.name = std::move(v);
    return e;
}

Expr Expr::literal(bool v) {
    Expr e;
    e.node = Node::boolean;
    e.flag = v;
    return e;
}

Expr Expr::compare(Comparator c, Expr lhs, Expr rhs) {
    Expr e;
    e.node = Node::compare;
    e.cmp = c;
    e.args = {std::move(lhs), std::move(rhs)};
    return e;
}

Expr Expr::all(std::vector<Expr> args) {
    if (args.size() < 2) fail(ErrorKind::validation, "'and' needs at least two operands");
    Expr e;
    e.node = Node::all;
    e.args = std::move(args);
    return e;
}

Expr Expr::any(std::vector<Expr> args) {
    if (args.size() < 2) fail(ErrorKind::validation, "'or' needs at least two operands");
    Expr e;
    e.node = Node::any;
    e.args = std::move(args);
    return e;
}

Expr Expr::negate(Expr inner) {
    Expr e;
    e.node = Node::negate;
    e.args = {std::move(inner)};
    return e;
}

namespace {

// ------------------------------------------------------------------ lexer

enum class Tok { end, lparen, rparen, cmp, kw_and, kw_or, kw_not, kw_true, kw_false, ident, number, text };

struct Token {
    Tok kind = Tok::end;
    std::string text;
    double number = 0.0;
    Comparator cmp = Comparator::eq;
    std::size_t pos = 0;
};

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

bool is_keyword(std::string_view s) {
    const std::string l = lower(s);
    return l == "and" || l == "or" || l == "not" || l == "true" || l == "false";
}

[[noreturn]] void syntax(std::string_view text, std::size_t pos, const std::string& what) {
    throw ValidationError({"malformed expression '" + std::string(text) + "' at offset " + std::to_string(pos) + ": " + what});
}

std::vector<Token> lex(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    auto push_cmp = [&](Comparator c, std::size_t len) {
        Token t;
        t.kind = Tok::cmp;
        t.cmp = c;
        t.pos = i;
        out.push_back(t);
        i += len;
    };
    while (i < s.size()) {
        const char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        const std::string_view rest = s.substr(i);
        Token t;
        t.pos = i;
        if (c == '(' || c == ')') {
            t.kind = c == '(' ? Tok::lparen : Tok::rparen;
            out.push_back(t);
            ++i;
        } else if (rest.starts_with("<=")) {
            push_cmp(Comparator::le, 2);
        } else if (rest.starts_with("<>")) {
            push_cmp(Comparator::ne, 2);
        } else if (rest.starts_with(">=")) {
            push_cmp(Comparator::ge, 2);
        } else if (rest.starts_with("==")) {
            push_cmp(Comparator::eq, 2);
        } else if (rest.starts_with("!=")) {
            push_cmp(Comparator::ne, 2);
        } else if (rest.starts_with("≤")) {
            push_cmp(Comparator::le, 3);
        } else if (rest.starts_with("≥")) {
            push_cmp(Comparator::ge, 3);
        } else if (rest.starts_with("≠")) {
            push_cmp(Comparator::ne, 3);
        } else if (c == '<') {
            push_cmp(Comparator::lt, 1);
        } else if (c == '>') {
            push_cmp(Comparator::gt, 1);
        } else if (c == '=') {
            push_cmp(Comparator::eq, 1);
        } else if (rest.starts_with("&&")) {
            t.kind = Tok::kw_and;
            out.push_back(t);
            i += 2;
        } else if (rest.starts_with("||")) {
            t.kind = Tok::kw_or;
            out.push_back(t);
            i += 2;
        } else if (c == '!') {
            t.kind = Tok::kw_not;
            out.push_back(t);
            ++i;
        } else if (c == '\'' || c == '"') {
            std::string value;
            std::size_t j = i + 1;
            bool closed = false;
            while (j < s.size()) {
                if (s[j] == '\\' && j + 1 < s.size()) {
                    value += s[j + 1];
                    j += 2;
                } else if (s[j] == c) {
                    closed = true;
                    ++j;
                    break;
                } else {
                    value += s[j++];
                }
            }
            if (!closed) syntax(s, i, "unterminated string literal");
            t.kind = Tok::text;
            t.text = std::move(value);
            out.push_back(t);
            i = j;
        } else if (c == '`') {
            const std::size_t close = s.find('`', i + 1);
            if (close == std::string_view::npos) syntax(s, i, "unterminated `quoted` column name");
            t.kind = Tok::ident;
            t.text = std::string(s.substr(i + 1, close - i - 1));
            if (t.text.empty()) syntax(s, i, "empty column name");
            out.push_back(t);
            i = close + 1;
        } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+') {
            std::size_t j = i;
            if (s[j] == '-' || s[j] == '+') ++j;
            while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
            if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < s.size() && (s[k] == '-' || s[k] == '+')) ++k;
                if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
                    j = k;
                    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
                }
            }
            std::size_t start = i;
            if (s[start] == '+') ++start;
            double v = 0.0;
            const auto res = std::from_chars(s.data() + start, s.data() + j, v);
            if (res.ec != std::errc() || res.ptr != s.data() + j) syntax(s, i, "bad number");
            t.kind = Tok::number;
            t.number = v;
            out.push_back(t);
            i = j;
        } else if (ident_start(c)) {
            std::size_t j = i;
            while (j < s.size() && ident_char(s[j])) ++j;
            const std::string word(s.substr(i, j - i));
            const std::string l = lower(word);
            if (l == "and") {
                t.kind = Tok::kw_and;
            } else if (l == "or") {
                t.kind = Tok::kw_or;
            } else if (l == "not") {
                t.kind = Tok::kw_not;
            } else if (l == "true") {
                t.kind = Tok::kw_true;
            } else if (l == "false") {
                t.kind = Tok::kw_false;
            } else {
                t.kind = Tok::ident;
                t.text = word;
            }
            out.push_back(t);
            i = j;
        } else {
            syntax(s, i, std::string("unexpected character '") + c + "'");
        }
    }
    Token end;
    end.pos = s.size();
    out.push_back(end);
    return out;
}

// ------------------------------------------------------------------ parser

class Parser {
public:
    Parser(std::string_view text) : text_(text), tokens_(lex(text)) {}

    Expr parse() {
        if (peek().kind == Tok::end) syntax(text_, 0, "empty expression");
        Expr e = parse_or();
        if (peek().kind != Tok::end) syntax(text_, peek().pos, "unexpected trailing input");
        return e;
    }

private:
    const Token& peek() const { return tokens_[pos_]; }
    Token next() { return tokens_[pos_++]; }

    Expr parse_or() {
        std::vector<Expr> parts{parse_and()};
        while (peek().kind == Tok::kw_or) {
            next();
            parts.push_back(parse_and());
        }
        return parts.size() == 1 ? std::move(parts[0]) : Expr::any(std::move(parts));
    }

    Expr parse_and() {
        std::vector<Expr> parts{parse_not()};
        while (peek().kind == Tok::kw_and) {
            next();
            parts.push_back(parse_not());
        }
        return parts.size() == 1 ? std::move(parts[0]) : Expr::all(std::move(parts));
    }

    Expr parse_not() {
        if (peek().kind == Tok::kw_not) {
            next();
            return Expr::negate(parse_not());
        }
        if (peek().kind == Tok::lparen) {
            const std::size_t at = next().pos;
            Expr e = parse_or();
            if (peek().kind != Tok::rparen) syntax(text_, at, "unbalanced parenthesis");
            next();
            return e;
        }
        Expr lhs = parse_operand();
        if (peek().kind == Tok::cmp) {
            const Comparator c = next().cmp;
            Expr rhs = parse_operand();
            if (peek().kind == Tok::cmp) syntax(text_, peek().pos, "chained comparison; combine with 'and'");
            return Expr::compare(c, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    Expr parse_operand() {
        const Token t = next();
        switch (t.kind) {
            case Tok::ident: return Expr::column(t.text);
            case Tok::number: return Expr::literal(t.number);
            case Tok::text: return Expr::literal(t.text);
            case Tok::kw_true: return Expr::literal(true);
            case Tok::kw_false: return Expr::literal(false);
            case Tok::end: syntax(text_, t.pos, "expression ends where an operand was expected");
            default: syntax(text_, t.pos, "expected a column, number, string or true/false");
        }
    }

    std::string_view text_;
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

std::string format_number(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

bool needs_group(const Expr& e) { return e.node == Expr::Node::all || e.node == Expr::Node::any; }

}  // namespace

Expr parse_expr(std::string_view text) { return Parser(text).parse(); }

std::string to_string(const Expr& e) {
    switch (e.node) {
        case Expr::Node::column: {
            bool bare = !e.name.empty() && ident_start(e.name[0]) && !is_keyword(e.name) &&
                        std::all_of(e.name.begin(), e.name.end(), ident_char);
            if (bare) return e.name;
            if (e.name.find('`') != std::string::npos) fail(ErrorKind::validation, "column name contains a backtick: " + e.name);
            return "`" + e.name + "`";
        }
        case Expr::Node::number: return format_number(e.number);
        case Expr::Node::text: {
            std::string out = "'";
            for (char c : e.name) {
                if (c == '\'' || c == '\\') out += '\\';
                out += c;
            }
            return out + "'";
        }
        case Expr::Node::boolean: return e.flag ? "true" : "false";
        case Expr::Node::compare: return to_string(e.args[0]) + " " + to_string(e.cmp) + " " + to_string(e.args[1]);
        case Expr::Node::all:
        case Expr::Node::any: {
            std::string out;
            for (std::size_t i = 0; i < e.args.size(); ++i) {
                if (i) out += e.node == Expr::Node::all ? " and " : " or ";
                out += needs_group(e.args[i]) ? "(" + to_string(e.args[i]) + ")" : to_string(e.args[i]);
            }
            return out;
        }
        case Expr::Node::negate: {
            const Expr& inner = e.args[0];
            const bool atom = inner.node == Expr::Node::column || inner.node == Expr::Node::boolean;
            return atom ? "not " + to_string(inner) : "not (" + to_string(inner) + ")";
        }
    }
    return "";
}

std::vector<std::string> referenced_columns(const Expr& e) {
    std::vector<std::string> out;
    auto visit = [&](const auto& self, const Expr& x) -> void {
        if (x.node == Expr::Node::column && std::find(out.begin(), out.end(), x.name) == out.end()) out.push_back(x.name);
        for (const auto& a : x.args) self(self, a);
    };
    visit(visit, e);
    return out;
}

namespace {

bool is_literal(const Expr& e) {
    return e.node == Expr::Node::number || e.node == Expr::Node::text || e.node == Expr::Node::boolean;
}

const char* literal_kind(const Expr& e) {
    switch (e.node) {
        case Expr::Node::number: return "number";
        case Expr::Node::text: return "string";
        case Expr::Node::boolean: return "boolean";
        default: return "expression";
    }
}

void check_compare(const Expr& e, const DataTable& table, std::vector<std::string>& issues) {
    const Expr& a = e.args[0];
    const Expr& b = e.args[1];
    const std::string where = " in '" + to_string(e) + "'";
    if (!a.is_column() && !b.is_column()) {
        issues.push_back("comparison between two literals" + where);
        return;
    }
    if (!a.is_column() && !is_literal(a)) issues.push_back("comparison operand must be a column or literal" + where);
    if (!b.is_column() && !is_literal(b)) issues.push_back("comparison operand must be a column or literal" + where);
    for (const Expr* side : {&a, &b}) {
        if (side->is_column() && !table.has_column(side->name)) issues.push_back("unknown column '" + side->name + "'");
    }
    const Column* ca = a.is_column() ? table.find(a.name) : nullptr;
    const Column* cb = b.is_column() ? table.find(b.name) : nullptr;
    if ((a.is_column() && !ca) || (b.is_column() && !cb)) return;
    const bool ordering = e.cmp != Comparator::eq && e.cmp != Comparator::ne;
    auto check_pair = [&](const Column& col, const Expr* lit, const Column* other) {
        switch (col.kind()) {
            case ColumnKind::numeric:
                if (lit && lit->node != Expr::Node::number) {
                    issues.push_back("numeric column '" + col.name() + "' compared with a " + literal_kind(*lit) + where);
                }
                if (other && other->kind() == ColumnKind::categorical) {
                    issues.push_back("numeric column '" + col.name() + "' compared with categorical column '" + other->name() + "'");
                }
                break;
            case ColumnKind::boolean:
                if (lit && lit->node == Expr::Node::text) {
                    issues.push_back("boolean column '" + col.name() + "' compared with a string" + where);
                }
                if (other && other->kind() == ColumnKind::categorical) {
                    issues.push_back("boolean column '" + col.name() + "' compared with categorical column '" + other->name() + "'");
                }
                break;
            case ColumnKind::datetime:
                if (lit && lit->node == Expr::Node::boolean) {
                    issues.push_back("datetime column '" + col.name() + "' compared with a boolean" + where);
                }
                if (lit && lit->node == Expr::Node::text && !parse_iso8601(lit->name)) {
                    issues.push_back("'" + lit->name + "' is not an ISO-8601 date for column '" + col.name() + "'");
                }
                if (other && other->kind() == ColumnKind::categorical) {
                    issues.push_back("datetime column '" + col.name() + "' compared with categorical column '" + other->name() + "'");
                }
                break;
            case ColumnKind::categorical:
                if (lit && lit->node != Expr::Node::text) {
                    issues.push_back("categorical column '" + col.name() + "' compared with a " + literal_kind(*lit) + where);
                }
                if (ordering) issues.push_back("ordering comparison on categorical column '" + col.name() + "'" + where);
                if (other && other->kind() != ColumnKind::categorical) {
                    issues.push_back("categorical column '" + col.name() + "' compared with non-categorical column '" + other->name() + "'");
                }
                break;
        }
    };
    if (ca && cb) {
        check_pair(*ca, nullptr, cb);
        if (ca->kind() != ColumnKind::categorical) check_pair(*cb, nullptr, ca);
    } else if (ca) {
        check_pair(*ca, &b, nullptr);
    } else {
        check_pair(*cb, &a, nullptr);
    }
}

void check(const Expr& e, const DataTable& table, std::vector<std::string>& issues, bool logical) {
    switch (e.node) {
        case Expr::Node::column:
            if (!table.has_column(e.name)) {
                issues.push_back("unknown column '" + e.name + "'");
            } else if (logical && table.column(e.name).kind() != ColumnKind::boolean) {
                issues.push_back("column '" + e.name + "' is not boolean; compare it with a value");
            }
            break;
        case Expr::Node::number:
        case Expr::Node::text:
            if (logical) issues.push_back(std::string("a ") + literal_kind(e) + " literal is not a condition");
            break;
        case Expr::Node::boolean: break;
        case Expr::Node::compare: check_compare(e, table, issues); break;
        case Expr::Node::all:
        case Expr::Node::any:
        case Expr::Node::negate:
            for (const auto& a : e.args) check(a, table, issues, true);
            break;
    }
}

struct Operand {
    const Column* column = nullptr;
    double number = 0.0;
    const std::string* text = nullptr;
};

Operand resolve(const Expr& e, const DataTable& table, const Column* other) {
    Operand o;
    switch (e.node) {
        case Expr::Node::column: o.column = &table.column(e.name); break;
        case Expr::Node::number: o.number = e.number; break;
        case Expr::Node::boolean: o.number = e.flag ? 1.0 : 0.0; break;
        case Expr::Node::text:
            if (other && other->kind() == ColumnKind::datetime) {
                o.number = static_cast<double>(*parse_iso8601(e.name));
            } else {
                o.text = &e.name;
            }
            break;
        default: break;
    }
    return o;
}

template <class T>
bool apply(Comparator c, const T& a, const T& b) {
    switch (c) {
        case Comparator::lt: return a < b;
        case Comparator::le: return a <= b;
        case Comparator::gt: return a > b;
        case Comparator::ge: return a >= b;
        case Comparator::eq: return a == b;
        case Comparator::ne: return a != b;
    }
    return false;
}

Mask eval(const Expr& e, const DataTable& table) {
    const std::size_t n = table.n_rows();
    Mask m{std::vector<std::uint8_t>(n, 0), std::vector<std::uint8_t>(n, 0)};
    switch (e.node) {
        case Expr::Node::column: {
            const Column& c = table.column(e.name);
            for (std::size_t i = 0; i < n; ++i) {
                m.missing[i] = c.is_missing(i);
                m.value[i] = !c.is_missing(i) && c.truth(i);
            }
            break;
        }
        case Expr::Node::boolean: std::fill(m.value.begin(), m.value.end(), e.flag); break;
        case Expr::Node::compare: {
            const Expr& ea = e.args[0];
            const Expr& eb = e.args[1];
            const Column* ca = ea.is_column() ? &table.column(ea.name) : nullptr;
            const Column* cb = eb.is_column() ? &table.column(eb.name) : nullptr;
            const Operand a = resolve(ea, table, cb);
            const Operand b = resolve(eb, table, ca);
            const bool textual = (ca && ca->kind() == ColumnKind::categorical) || (cb && cb->kind() == ColumnKind::categorical);
            for (std::size_t i = 0; i < n; ++i) {
                if ((a.column && a.column->is_missing(i)) || (b.column && b.column->is_missing(i))) {
                    m.missing[i] = 1;
                    continue;
                }
                if (textual) {
                    const std::string& ta = a.column ? a.column->text(i) : *a.text;
                    const std::string& tb = b.column ? b.column->text(i) : *b.text;
                    m.value[i] = apply(e.cmp, ta, tb);
                } else {
                    const double va = a.column ? a.column->number(i) : a.number;
                    const double vb = b.column ? b.column->number(i) : b.number;
                    m.value[i] = apply(e.cmp, va, vb);
                }
            }
            break;
        }
        case Expr::Node::all:
        case Expr::Node::any: {
            const bool conj = e.node == Expr::Node::all;
            std::vector<Mask> parts;
            for (const auto& a : e.args) parts.push_back(eval(a, table));
            for (std::size_t i = 0; i < n; ++i) {
                bool decided = false, any_missing = false;
                for (const auto& p : parts) {
                    if (p.missing[i]) {
                        any_missing = true;
                    } else if (static_cast<bool>(p.value[i]) != conj) {
                        decided = true;  // a false operand of 'and', a true operand of 'or'
                        break;
                    }
                }
                if (decided) {
                    m.value[i] = !conj;
                } else if (any_missing) {
                    m.missing[i] = 1;
                } else {
                    m.value[i] = conj;
                }
            }
            break;
        }
        case Expr::Node::negate: {
            m = eval(e.args[0], table);
            for (std::size_t i = 0; i < n; ++i) m.value[i] = !m.missing[i] && !m.value[i];
            break;
        }
        default: break;
    }
    return m;
}

}  // namespace

std::vector<std::string> typecheck(const Expr& e, const DataTable& table) {
    std::vector<std::string> issues;
    check(e, table, issues, true);
    return issues;
}

Mask eval_condition(const Expr& e, const DataTable& table) {
    auto issues = typecheck(e, table);
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return eval(e, table);
}

}  // namespace autods::hypothesis
