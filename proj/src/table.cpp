#include "autods/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "autods/error.hpp"

namespace autods {

const char* to_string(ColumnKind kind) noexcept {
    switch (kind) {
        case ColumnKind::numeric: return "numeric";
        case ColumnKind::categorical: return "categorical";
        case ColumnKind::boolean: return "boolean";
        case ColumnKind::datetime: return "datetime";
    }
    return "?";
}

std::optional<ColumnKind> parse_column_kind(std::string_view text) noexcept {
    if (text == "numeric") return ColumnKind::numeric;
    if (text == "categorical") return ColumnKind::categorical;
    if (text == "boolean") return ColumnKind::boolean;
    if (text == "datetime") return ColumnKind::datetime;
    return std::nullopt;
}

namespace {

std::vector<std::uint8_t> normalize_mask(std::vector<std::uint8_t> missing, std::size_t n) {
    if (missing.empty()) return std::vector<std::uint8_t>(n, 0);
    if (missing.size() != n) fail(ErrorKind::schema, "missing mask length does not match values");
    for (auto& m : missing) m = m ? 1 : 0;
    return missing;
}

}  // namespace

Column Column::numeric(std::string name, std::vector<double> values, std::vector<std::uint8_t> missing) {
    Column c(std::move(name), ColumnKind::numeric);
    c.missing_ = normalize_mask(std::move(missing), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (c.missing_[i] || !std::isfinite(values[i])) {
            c.missing_[i] = 1;
            values[i] = 0.0;
        }
    }
    c.numbers_ = std::move(values);
    return c;
}

Column Column::boolean(std::string name, const std::vector<bool>& values, std::vector<std::uint8_t> missing) {
    Column c(std::move(name), ColumnKind::boolean);
    c.missing_ = normalize_mask(std::move(missing), values.size());
    c.numbers_.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        c.numbers_[i] = (!c.missing_[i] && values[i]) ? 1.0 : 0.0;
    }
    return c;
}

Column Column::categorical(std::string name, std::vector<std::string> values, std::vector<std::uint8_t> missing) {
    Column c(std::move(name), ColumnKind::categorical);
    c.missing_ = normalize_mask(std::move(missing), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (c.missing_[i]) values[i].clear();
    }
    c.texts_ = std::move(values);
    return c;
}

Column Column::datetime(std::string name, std::vector<std::int64_t> epoch_seconds, std::vector<std::string> text,
                        std::vector<std::uint8_t> missing) {
    if (text.size() != epoch_seconds.size()) fail(ErrorKind::schema, "datetime text length does not match values");
    Column c(std::move(name), ColumnKind::datetime);
    c.missing_ = normalize_mask(std::move(missing), epoch_seconds.size());
    c.numbers_.resize(epoch_seconds.size());
    for (std::size_t i = 0; i < epoch_seconds.size(); ++i) {
        if (c.missing_[i]) {
            text[i].clear();
        } else {
            c.numbers_[i] = static_cast<double>(epoch_seconds[i]);
            if (text[i].empty()) text[i] = format_iso8601(epoch_seconds[i]);
        }
    }
    c.texts_ = std::move(text);
    return c;
}

std::size_t Column::missing_count() const noexcept {
    return static_cast<std::size_t>(std::count(missing_.begin(), missing_.end(), std::uint8_t{1}));
}

std::vector<double> Column::present_numbers() const {
    if (!is_numeric_like()) fail(ErrorKind::schema, "column '" + name_ + "' is categorical and has no numeric values");
    std::vector<double> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) {
        if (!missing_[i]) out.push_back(numbers_[i]);
    }
    return out;
}

Column Column::renamed(std::string name) const {
    Column c = *this;
    c.name_ = std::move(name);
    return c;
}

Column Column::take(std::span<const std::size_t> rows) const {
    Column c(name_, kind_);
    c.missing_.reserve(rows.size());
    if (!numbers_.empty()) c.numbers_.reserve(rows.size());
    if (!texts_.empty()) c.texts_.reserve(rows.size());
    for (std::size_t r : rows) {
        c.missing_.push_back(missing_.at(r));
        if (!numbers_.empty()) c.numbers_.push_back(numbers_[r]);
        if (!texts_.empty()) c.texts_.push_back(texts_[r]);
    }
    return c;
}

DataTable::DataTable(std::vector<Column> columns) : columns_(std::move(columns)) {
    std::unordered_set<std::string> seen;
    n_rows_ = columns_.empty() ? 0 : columns_.front().size();
    for (const auto& c : columns_) {
        if (c.name().empty()) fail(ErrorKind::schema, "column names must be non-empty");
        if (!seen.insert(c.name()).second) fail(ErrorKind::schema, "duplicate column name '" + c.name() + "'");
        if (c.size() != n_rows_) {
            fail(ErrorKind::schema, "column '" + c.name() + "' has " + std::to_string(c.size()) +
                                        " cells, expected " + std::to_string(n_rows_));
        }
    }
}

std::vector<std::string> DataTable::column_names() const {
    std::vector<std::string> names;
    names.reserve(columns_.size());
    for (const auto& c : columns_) names.push_back(c.name());
    return names;
}

const Column* DataTable::find(std::string_view name) const {
    for (const auto& c : columns_) {
        if (c.name() == name) return &c;
    }
    return nullptr;
}

const Column& DataTable::column(std::string_view name) const {
    if (const Column* c = find(name)) return *c;
    fail(ErrorKind::schema, "no column named '" + std::string(name) + "'");
}

DataTable DataTable::with_column(Column column) const {
    std::vector<Column> cols = columns_;
    cols.push_back(std::move(column));
    return DataTable(std::move(cols));
}

DataTable DataTable::with_columns(std::vector<Column> columns) const {
    std::vector<Column> cols = columns_;
    for (auto& c : columns) cols.push_back(std::move(c));
    return DataTable(std::move(cols));
}

DataTable DataTable::replace_column(Column column) const {
    std::vector<Column> cols = columns_;
    for (auto& c : cols) {
        if (c.name() == column.name()) {
            c = std::move(column);
            return DataTable(std::move(cols));
        }
    }
    fail(ErrorKind::schema, "no column named '" + column.name() + "'");
}

DataTable DataTable::without_columns(const std::vector<std::string>& names) const {
    std::vector<Column> cols;
    for (const auto& c : columns_) {
        if (std::find(names.begin(), names.end(), c.name()) == names.end()) cols.push_back(c);
    }
    return DataTable(std::move(cols));
}

DataTable DataTable::take_rows(std::span<const std::size_t> rows) const {
    std::vector<Column> cols;
    cols.reserve(columns_.size());
    for (const auto& c : columns_) cols.push_back(c.take(rows));
    DataTable t(std::move(cols));
    t.n_rows_ = rows.size();
    return t;
}

// ---------------------------------------------------------------------------
// ISO-8601

namespace {

// days_from_civil (Howard Hinnant); proleptic Gregorian.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
}

bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

}  // namespace

std::optional<std::int64_t> parse_iso8601(std::string_view s) noexcept {
    int year = 0, month = 0, day = 0;
    if (s.size() < 10 || !read_digits(s, 0, 4, year) || s[4] != '-' || !read_digits(s, 5, 2, month) || s[7] != '-' ||
        !read_digits(s, 8, 2, day)) {
        return std::nullopt;
    }
    static constexpr int kDays[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month < 1 || month > 12 || day < 1 || day > kDays[month - 1]) return std::nullopt;
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    if (month == 2 && day == 29 && !leap) return std::nullopt;
    std::int64_t seconds = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 86400;
    std::size_t pos = 10;
    if (pos == s.size()) return seconds;
    if (s[pos] != 'T' && s[pos] != ' ') return std::nullopt;
    int hh = 0, mm = 0, ss = 0;
    if (!read_digits(s, pos + 1, 2, hh) || pos + 3 >= s.size() || s[pos + 3] != ':' || !read_digits(s, pos + 4, 2, mm)) {
        return std::nullopt;
    }
    pos += 6;
    if (pos < s.size() && s[pos] == ':') {
        if (!read_digits(s, pos + 1, 2, ss)) return std::nullopt;
        pos += 3;
    }
    if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
    seconds += hh * 3600 + mm * 60 + ss;
    if (pos == s.size()) return seconds;
    if (s[pos] == 'Z' && pos + 1 == s.size()) return seconds;
    if ((s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() && s[pos + 3] == ':') {
        int oh = 0, om = 0;
        if (!read_digits(s, pos + 1, 2, oh) || !read_digits(s, pos + 4, 2, om)) return std::nullopt;
        const int offset = oh * 3600 + om * 60;
        return s[pos] == '+' ? seconds - offset : seconds + offset;
    }
    return std::nullopt;
}

std::string format_iso8601(std::int64_t epoch_seconds) {
    std::int64_t days = epoch_seconds / 86400;
    std::int64_t rem = epoch_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    std::int64_t y = 0;
    unsigned m = 0, d = 0;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:%02d:%02dZ", static_cast<long long>(y), m, d,
                  static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60), static_cast<int>(rem % 60));
    return buf;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

struct Field {
    std::string text;
    bool quoted = false;
};

struct Record {
    std::vector<Field> fields;
    std::size_t line = 0;
};

std::vector<Record> split_records(std::string_view text) {
    std::vector<Record> records;
    std::size_t i = 0;
    std::size_t line = 1;
    if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
    while (i < text.size()) {
        Record rec;
        rec.line = line;
        Field field;
        bool in_quotes = false;
        bool record_done = false;
        while (i < text.size() && !record_done) {
            const char c = text[i];
            if (in_quotes) {
                if (c == '"') {
                    if (i + 1 < text.size() && text[i + 1] == '"') {
                        field.text.push_back('"');
                        i += 2;
                    } else {
                        in_quotes = false;
                        ++i;
                    }
                } else {
                    if (c == '\n') ++line;
                    field.text.push_back(c);
                    ++i;
                }
            } else if (c == '"' && field.text.empty() && !field.quoted) {
                in_quotes = true;
                field.quoted = true;
                ++i;
            } else if (c == ',') {
                rec.fields.push_back(std::move(field));
                field = Field{};
                ++i;
            } else if (c == '\r' || c == '\n') {
                if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
                ++i;
                ++line;
                record_done = true;
            } else {
                field.text.push_back(c);
                ++i;
            }
        }
        if (in_quotes) fail(ErrorKind::data, "unterminated quoted field starting at line " + std::to_string(rec.line));
        rec.fields.push_back(std::move(field));
        // Blank lines carry no record.
        if (rec.fields.size() == 1 && rec.fields[0].text.empty() && !rec.fields[0].quoted) continue;
        records.push_back(std::move(rec));
    }
    return records;
}

std::optional<double> parse_number(std::string_view s) {
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<bool> parse_bool(std::string_view s) {
    if (s == "1") return true;
    if (s == "0") return false;
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (lower == "true") return true;
    if (lower == "false") return false;
    return std::nullopt;
}

ColumnKind infer_kind(const std::vector<const Field*>& present) {
    if (present.empty()) return ColumnKind::numeric;
    const auto all = [&](auto pred) { return std::all_of(present.begin(), present.end(), pred); };
    if (all([](const Field* f) { return parse_bool(f->text).has_value(); })) return ColumnKind::boolean;
    if (all([](const Field* f) { return parse_number(f->text).has_value(); })) return ColumnKind::numeric;
    if (all([](const Field* f) { return parse_iso8601(f->text).has_value(); })) return ColumnKind::datetime;
    return ColumnKind::categorical;
}

[[noreturn]] void cell_error(const std::string& column, std::size_t line, const std::string& value, ColumnKind kind) {
    fail(ErrorKind::data, "line " + std::to_string(line) + ", column '" + column + "': cannot read '" + value +
                              "' as " + to_string(kind));
}

}  // namespace

DataTable parse_csv(std::string_view text, const CsvOptions& options) {
    const std::vector<Record> records = split_records(text);
    if (records.empty()) fail(ErrorKind::data, "CSV input has no header row");
    const Record& header = records.front();
    std::vector<std::string> names;
    std::unordered_set<std::string> seen;
    for (const auto& f : header.fields) {
        if (f.text.empty()) fail(ErrorKind::schema, "empty column name in header");
        if (!seen.insert(f.text).second) fail(ErrorKind::schema, "duplicate header '" + f.text + "'");
        names.push_back(f.text);
    }
    for (const auto& [hinted, kind] : options.kind_hints) {
        if (!seen.count(hinted)) fail(ErrorKind::schema, "kind hint for unknown column '" + hinted + "'");
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].fields.size() != names.size()) {
            fail(ErrorKind::data, "ragged row at line " + std::to_string(records[r].line) + ": expected " +
                                      std::to_string(names.size()) + " fields, found " +
                                      std::to_string(records[r].fields.size()));
        }
    }

    const auto is_missing = [&](const Field& f) {
        if (f.quoted) return false;
        if (f.text.empty() || f.text == "NA") return true;
        return std::find(options.extra_missing.begin(), options.extra_missing.end(), f.text) !=
               options.extra_missing.end();
    };

    const std::size_t n = records.size() - 1;
    std::vector<Column> columns;
    columns.reserve(names.size());
    for (std::size_t c = 0; c < names.size(); ++c) {
        std::vector<std::uint8_t> missing(n, 0);
        std::vector<const Field*> present;
        for (std::size_t r = 0; r < n; ++r) {
            const Field& f = records[r + 1].fields[c];
            if (is_missing(f)) {
                missing[r] = 1;
            } else {
                present.push_back(&f);
            }
        }
        const auto hint = options.kind_hints.find(names[c]);
        const ColumnKind kind = hint != options.kind_hints.end() ? hint->second : infer_kind(present);
        switch (kind) {
            case ColumnKind::numeric: {
                std::vector<double> values(n, 0.0);
                for (std::size_t r = 0; r < n; ++r) {
                    if (missing[r]) continue;
                    const auto& f = records[r + 1].fields[c];
                    const auto v = parse_number(f.text);
                    if (!v) cell_error(names[c], records[r + 1].line, f.text, kind);
                    values[r] = *v;
                }
                columns.push_back(Column::numeric(names[c], std::move(values), std::move(missing)));
                break;
            }
            case ColumnKind::boolean: {
                std::vector<bool> values(n, false);
                for (std::size_t r = 0; r < n; ++r) {
                    if (missing[r]) continue;
                    const auto& f = records[r + 1].fields[c];
                    const auto v = parse_bool(f.text);
                    if (!v) cell_error(names[c], records[r + 1].line, f.text, kind);
                    values[r] = *v;
                }
                columns.push_back(Column::boolean(names[c], values, std::move(missing)));
                break;
            }
            case ColumnKind::datetime: {
                std::vector<std::int64_t> values(n, 0);
                std::vector<std::string> raw(n);
                for (std::size_t r = 0; r < n; ++r) {
                    if (missing[r]) continue;
                    const auto& f = records[r + 1].fields[c];
                    const auto v = parse_iso8601(f.text);
                    if (!v) cell_error(names[c], records[r + 1].line, f.text, kind);
                    values[r] = *v;
                    raw[r] = f.text;
                }
                columns.push_back(Column::datetime(names[c], std::move(values), std::move(raw), std::move(missing)));
                break;
            }
            case ColumnKind::categorical: {
                std::vector<std::string> values(n);
                for (std::size_t r = 0; r < n; ++r) {
                    if (!missing[r]) values[r] = records[r + 1].fields[c].text;
                }
                columns.push_back(Column::categorical(names[c], std::move(values), std::move(missing)));
                break;
            }
        }
    }
    return DataTable(std::move(columns));
}

DataTable load_csv(const std::filesystem::path& path, const CsvOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::data, "cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), options);
}

namespace {

bool needs_quotes(std::string_view s) {
    if (s.empty() || s == "NA") return true;
    if (s.front() == ' ' || s.back() == ' ') return true;
    return s.find_first_of(",\"\r\n") != std::string_view::npos;
}

void put_text(std::string& out, std::string_view s) {
    if (!needs_quotes(s)) {
        out.append(s);
        return;
    }
    out.push_back('"');
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
}

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::string to_csv(const DataTable& table) {
    std::string out;
    const auto& cols = table.columns();
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (c) out.push_back(',');
        put_text(out, cols[c].name());
    }
    out.push_back('\n');
    // A numeric column holding only 0/1 would re-infer as boolean; keep a decimal point.
    std::vector<bool> force_decimal(cols.size(), false);
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c].kind() != ColumnKind::numeric) continue;
        bool only01 = true;
        for (std::size_t r = 0; r < table.n_rows() && only01; ++r) {
            if (!cols[c].is_missing(r) && cols[c].number(r) != 0.0 && cols[c].number(r) != 1.0) only01 = false;
        }
        force_decimal[c] = only01;
    }
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c) out.push_back(',');
            const Column& col = cols[c];
            if (col.is_missing(r)) continue;
            switch (col.kind()) {
                case ColumnKind::numeric: {
                    std::string s = format_number(col.number(r));
                    if (force_decimal[c] && s.find('.') == std::string::npos) s += ".0";
                    out += s;
                    break;
                }
                case ColumnKind::boolean: out += col.truth(r) ? "true" : "false"; break;
                case ColumnKind::datetime:
                case ColumnKind::categorical: put_text(out, col.text(r)); break;
            }
        }
        out.push_back('\n');
    }
    return out;
}

void write_csv(const DataTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::data, "cannot write '" + path.string() + "'");
    out << to_csv(table);
}

// ---------------------------------------------------------------------------
// Summaries

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) fail(ErrorKind::domain, "quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, p);
}

ColumnSummary summarize(const Column& column) {
    ColumnSummary s;
    s.name = column.name();
    s.kind = column.kind();
    s.n_rows = column.size();
    s.missing_count = column.missing_count();
    if (column.is_numeric_like()) {
        std::vector<double> v = column.present_numbers();
        std::sort(v.begin(), v.end());
        s.distinct_count = static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
        v = column.present_numbers();
        std::sort(v.begin(), v.end());
        if (!v.empty()) {
            NumericStats st;
            const double n = static_cast<double>(v.size());
            double sum = 0;
            for (double x : v) sum += x;
            st.mean = sum / n;
            double m2 = 0, m3 = 0;
            for (double x : v) {
                const double d = x - st.mean;
                m2 += d * d;
                m3 += d * d * d;
            }
            st.std = v.size() > 1 ? std::sqrt(m2 / (n - 1)) : 0.0;
            st.skewness = m2 > 0 ? (m3 / n) / std::pow(m2 / n, 1.5) : 0.0;
            st.min = v.front();
            st.max = v.back();
            st.q1 = quantile_sorted(v, 0.25);
            st.median = quantile_sorted(v, 0.5);
            st.q3 = quantile_sorted(v, 0.75);
            st.integer_valued = std::all_of(v.begin(), v.end(), [](double x) { return x == std::floor(x); });
            s.numeric = st;
        }
    }
    if (column.kind() == ColumnKind::categorical || column.kind() == ColumnKind::boolean) {
        std::map<std::string, std::size_t> counts;
        for (std::size_t r = 0; r < column.size(); ++r) {
            if (column.is_missing(r)) continue;
            if (column.kind() == ColumnKind::boolean) {
                ++counts[column.truth(r) ? "true" : "false"];
            } else {
                ++counts[column.text(r)];
            }
        }
        s.distinct_count = counts.size();
        if (!counts.empty()) {
            CategoricalStats cs;
            for (const auto& [value, count] : counts) {
                if (count > cs.mode_frequency) {
                    cs.mode = value;
                    cs.mode_frequency = count;
                }
            }
            s.categorical = cs;
        }
    }
    return s;
}

std::vector<ColumnSummary> summarize(const DataTable& table) {
    std::vector<ColumnSummary> out;
    out.reserve(table.n_cols());
    for (const auto& c : table.columns()) out.push_back(summarize(c));
    return out;
}

}  // namespace autods
