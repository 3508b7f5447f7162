#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "autods/table.hpp"

namespace autods::hypothesis {

enum class Comparator { lt, le, gt, ge, eq, ne };

const char* to_string(Comparator c) noexcept;

/// Row-level condition: comparisons between columns and literals combined
/// with and/or/not. No arithmetic.
struct Expr {
    enum class Node { column, number, text, boolean, compare, all, any, negate };

    Node node = Node::boolean;
    std::string name;  // column name or string literal
    double number = 0.0;
    bool flag = false;
    Comparator cmp = Comparator::eq;
    std::vector<Expr> args;

    static Expr column(std::string name);
    static Expr literal(double v);
    static Expr literal(std::string v);
    static Expr literal(bool v);
    static Expr compare(Comparator c, Expr lhs, Expr rhs);
    static Expr all(std::vector<Expr> args);
    static Expr any(std::vector<Expr> args);
    static Expr negate(Expr e);

    bool is_column() const noexcept { return node == Node::column; }

    bool operator==(const Expr&) const = default;
};

/// Grammar (keywords case-insensitive):
///   or   := and ("or" | "||") and ...
///   and  := not ("and" | "&&") not ...
///   not  := ("not" | "!") not | "(" or ")" | operand [cmp operand]
///   cmp  := < <= > >= = == != <> and the Unicode forms of <=, >=, !=
/// Operands are column names (bare identifiers or `backticked`), numbers,
/// 'single' or "double" quoted strings, true and false.
/// Throws ValidationError listing the syntax problem.
Expr parse_expr(std::string_view text);

/// Canonical text; parse_expr(to_string(e)) == e.
std::string to_string(const Expr& e);

/// Column names referenced by the expression, in first-use order.
std::vector<std::string> referenced_columns(const Expr& e);

/// Type problems against a table's schema (empty when fine).
std::vector<std::string> typecheck(const Expr& e, const DataTable& table);

/// Per-row truth with Kleene logic; a comparison touching a missing cell is
/// missing (neither true nor false).
struct Mask {
    std::vector<std::uint8_t> value;
    std::vector<std::uint8_t> missing;

    std::size_t size() const noexcept { return value.size(); }
    bool is_true(std::size_t i) const { return !missing[i] && value[i]; }
    bool is_false(std::size_t i) const { return !missing[i] && !value[i]; }
};

/// Requires typecheck to pass; throws ValidationError otherwise.
Mask eval_condition(const Expr& e, const DataTable& table);

}  // namespace autods::hypothesis
