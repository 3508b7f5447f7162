#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace autods {

enum class ColumnKind { numeric, categorical, boolean, datetime };

const char* to_string(ColumnKind kind) noexcept;
std::optional<ColumnKind> parse_column_kind(std::string_view text) noexcept;

/// One typed column with a per-cell missing mask.
///
/// Numeric, boolean (0/1) and datetime (epoch seconds) cells live in the
/// number store; categorical cells and the original datetime strings live in
/// the text store. Missing cells hold 0 / "" in the stores.
class Column {
public:
    /// Non-finite values are stored as missing.
    static Column numeric(std::string name, std::vector<double> values,
                          std::vector<std::uint8_t> missing = {});
    static Column boolean(std::string name, const std::vector<bool>& values,
                          std::vector<std::uint8_t> missing = {});
    static Column categorical(std::string name, std::vector<std::string> values,
                              std::vector<std::uint8_t> missing = {});
    static Column datetime(std::string name, std::vector<std::int64_t> epoch_seconds,
                           std::vector<std::string> text, std::vector<std::uint8_t> missing = {});

    const std::string& name() const noexcept { return name_; }
    ColumnKind kind() const noexcept { return kind_; }
    std::size_t size() const noexcept { return missing_.size(); }

    bool is_missing(std::size_t row) const { return missing_[row] != 0; }
    /// Numeric value of a numeric/boolean/datetime cell.
    double number(std::size_t row) const { return numbers_[row]; }
    bool truth(std::size_t row) const { return numbers_[row] != 0.0; }
    /// Text of a categorical cell, or the original string of a datetime cell.
    const std::string& text(std::size_t row) const { return texts_[row]; }

    /// True for kinds stored in the number store.
    bool is_numeric_like() const noexcept { return kind_ != ColumnKind::categorical; }

    std::span<const double> numbers() const noexcept { return numbers_; }
    std::span<const std::string> texts() const noexcept { return texts_; }
    std::span<const std::uint8_t> missing_mask() const noexcept { return missing_; }
    std::size_t missing_count() const noexcept;

    /// Non-missing numeric values, in row order. Throws schema error for categorical columns.
    std::vector<double> present_numbers() const;

    Column renamed(std::string name) const;
    Column take(std::span<const std::size_t> rows) const;

    bool operator==(const Column&) const = default;

private:
    Column(std::string name, ColumnKind kind) : name_(std::move(name)), kind_(kind) {}

    std::string name_;
    ColumnKind kind_ = ColumnKind::numeric;
    std::vector<double> numbers_;
    std::vector<std::string> texts_;
    std::vector<std::uint8_t> missing_;
};

/// Immutable columnar dataset. All "mutators" return a new table.
class DataTable {
public:
    DataTable() = default;
    /// Throws schema error on duplicate/empty names or unequal lengths.
    explicit DataTable(std::vector<Column> columns);

    std::size_t n_rows() const noexcept { return n_rows_; }
    std::size_t n_cols() const noexcept { return columns_.size(); }
    const std::vector<Column>& columns() const noexcept { return columns_; }
    std::vector<std::string> column_names() const;

    bool has_column(std::string_view name) const { return find(name) != nullptr; }
    const Column* find(std::string_view name) const;
    /// Throws schema error naming the column when absent.
    const Column& column(std::string_view name) const;

    DataTable with_column(Column column) const;
    DataTable with_columns(std::vector<Column> columns) const;
    DataTable replace_column(Column column) const;
    DataTable without_columns(const std::vector<std::string>& names) const;
    DataTable take_rows(std::span<const std::size_t> rows) const;

    bool operator==(const DataTable&) const = default;

private:
    std::vector<Column> columns_;
    std::size_t n_rows_ = 0;
};

struct CsvOptions {
    std::map<std::string, ColumnKind> kind_hints;
    /// Extra cell values read as missing, on top of "" and "NA".
    std::vector<std::string> extra_missing;
};

DataTable parse_csv(std::string_view text, const CsvOptions& options = {});
DataTable load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
std::string to_csv(const DataTable& table);
void write_csv(const DataTable& table, const std::filesystem::path& path);

/// Parses YYYY-MM-DD, optionally followed by [T ]HH:MM[:SS] and Z or +hh:mm.
std::optional<std::int64_t> parse_iso8601(std::string_view text) noexcept;
std::string format_iso8601(std::int64_t epoch_seconds);

struct NumericStats {
    double mean = 0, std = 0, min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
    double skewness = 0;
    bool integer_valued = false;
    bool operator==(const NumericStats&) const = default;
};

struct CategoricalStats {
    std::string mode;
    std::size_t mode_frequency = 0;
    bool operator==(const CategoricalStats&) const = default;
};

struct ColumnSummary {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::size_t n_rows = 0;
    std::size_t missing_count = 0;
    std::size_t distinct_count = 0;
    std::optional<NumericStats> numeric;          // numeric, boolean, datetime
    std::optional<CategoricalStats> categorical;  // categorical, boolean
    bool operator==(const ColumnSummary&) const = default;
};

ColumnSummary summarize(const Column& column);
std::vector<ColumnSummary> summarize(const DataTable& table);

/// Type-7 quantile (linear interpolation between closest ranks) of sorted data.
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> values, double p);

}  // namespace autods
