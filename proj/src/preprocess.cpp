#include "autods/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "autods/error.hpp"
#include "autods/rng.hpp"

namespace autods::preprocess {

using nlohmann::json;

namespace {

constexpr const char* kKindNames[] = {"standard_scale", "minmax_scale", "robust_scale", "one_hot", "label_encode", "target_encode",
                                      "bin",            "indicator",    "log",          "sqrt",    "power"};

bool numeric_source(TransformKind k) {
    switch (k) {
        case TransformKind::standard_scale:
        case TransformKind::minmax_scale:
        case TransformKind::robust_scale:
        case TransformKind::bin:
        case TransformKind::log:
        case TransformKind::sqrt:
        case TransformKind::power:
            return true;
        default:
            return false;
    }
}

bool categorical_source(TransformKind k) {
    return k == TransformKind::one_hot || k == TransformKind::label_encode || k == TransformKind::target_encode;
}

std::string default_prefix(TransformKind k) {
    switch (k) {
        case TransformKind::standard_scale: return "scaled_";
        case TransformKind::minmax_scale: return "minmax_";
        case TransformKind::robust_scale: return "robust_";
        case TransformKind::one_hot: return "encoded_";
        case TransformKind::label_encode: return "label_";
        case TransformKind::target_encode: return "target_encoded_";
        case TransformKind::bin: return "bucketed_";
        case TransformKind::log: return "log_";
        case TransformKind::sqrt: return "sqrt_";
        case TransformKind::power: return "power_";
        case TransformKind::indicator: return "";
    }
    return "";
}

std::string join_rows(const std::vector<std::size_t>& rows) {
    std::string out;
    const std::size_t shown = std::min<std::size_t>(rows.size(), 5);
    for (std::size_t i = 0; i < shown; ++i) out += (i ? ", " : "") + std::to_string(rows[i]);
    if (rows.size() > shown) out += ", ... (" + std::to_string(rows.size()) + " rows)";
    return out;
}

// population variance
double pvariance(const std::vector<double>& y) {
    const double m = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double s = 0.0;
    for (double v : y) s += (v - m) * (v - m);
    return s / static_cast<double>(y.size());
}

template <class F>
double maximize(F&& f) {
    double best = -5.0, best_val = -INFINITY;
    for (int i = 0; i <= 100; ++i) {
        const double l = -5.0 + 0.1 * i;
        const double v = f(l);
        if (v > best_val) best_val = v, best = l;
    }
    double a = std::max(-5.0, best - 0.1), b = std::min(5.0, best + 0.1);
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > 1e-9) {
        if (fc > fd) {
            b = d, d = c, fd = fc;
            c = b - g * (b - a), fc = f(c);
        } else {
            a = c, c = d, fc = fd;
            d = a + g * (b - a), fd = f(d);
        }
    }
    const double mid = 0.5 * (a + b);
    return f(mid) >= best_val ? mid : best;
}

double encode_target(const Column& t, std::size_t r, const std::string& positive) {
    if (t.kind() == ColumnKind::categorical) return t.text(r) == positive ? 1.0 : 0.0;
    return t.number(r);
}

std::vector<double> transform_numbers(const Column& src, const TransformSpec& spec, std::vector<std::uint8_t>& missing) {
    const std::size_t n = src.size();
    std::vector<double> out(n, 0.0);
    missing.assign(n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        if (src.is_missing(r)) {
            missing[r] = 1;
            continue;
        }
        const double x = src.number(r);
        double y = 0.0;
        switch (spec.kind) {
            case TransformKind::standard_scale:
            case TransformKind::minmax_scale:
            case TransformKind::robust_scale:
                y = (x - spec.center) / spec.scale;
                break;
            case TransformKind::log:
                y = x > 0.0 ? std::log(x) : NAN;
                break;
            case TransformKind::sqrt:
                y = x >= 0.0 ? std::sqrt(x) : NAN;
                break;
            case TransformKind::power:
                y = spec.method == "box_cox" ? (x > 0.0 ? box_cox(x, spec.lambda) : NAN) : yeo_johnson(x, spec.lambda);
                break;
            default:
                break;
        }
        if (!std::isfinite(y)) {
            missing[r] = 1;
            y = 0.0;
        }
        out[r] = y;
    }
    return out;
}

Column bin_column(const Column& src, const TransformSpec& spec, const std::string& name) {
    const std::size_t n = src.size();
    std::vector<std::string> out(n);
    std::vector<std::uint8_t> missing(n, 0);
    const auto& e = spec.edges;
    for (std::size_t r = 0; r < n; ++r) {
        if (src.is_missing(r)) {
            missing[r] = 1;
            continue;
        }
        const double x = src.number(r);
        std::size_t bin = 0;
        if (x < e.front() || x > e.back()) {
            if (!spec.open_ends) {
                missing[r] = 1;
                continue;
            }
            bin = x < e.front() ? 0 : spec.labels.size() - 1;
        } else {
            // (e[i], e[i+1]], the first interval closed on the left
            const auto it = std::lower_bound(e.begin(), e.end(), x);
            bin = it == e.begin() ? 0 : static_cast<std::size_t>(it - e.begin()) - 1;
        }
        out[r] = spec.labels[bin];
    }
    return Column::categorical(name, std::move(out), std::move(missing));
}

std::vector<Column> encode_columns(const Column& src, const TransformSpec& spec) {
    const std::size_t n = src.size();
    const auto names = spec.outputs();
    std::vector<Column> out;
    if (spec.kind == TransformKind::one_hot) {
        const bool single = spec.categories.size() == 2;
        const std::size_t width = single ? 1 : spec.categories.size();
        std::vector<std::vector<double>> values(width, std::vector<double>(n, 0.0));
        std::vector<std::uint8_t> missing(n, 0);
        for (std::size_t r = 0; r < n; ++r) {
            if (src.is_missing(r)) {
                missing[r] = 1;
                continue;
            }
            const auto it = std::lower_bound(spec.categories.begin(), spec.categories.end(), src.text(r));
            if (it == spec.categories.end() || *it != src.text(r)) continue;
            const auto k = static_cast<std::size_t>(it - spec.categories.begin());
            if (single) {
                values[0][r] = k == 1 ? 1.0 : 0.0;
            } else {
                values[k][r] = 1.0;
            }
        }
        for (std::size_t k = 0; k < width; ++k) out.push_back(Column::numeric(names[k], std::move(values[k]), missing));
        return out;
    }
    std::vector<double> values(n, 0.0);
    std::vector<std::uint8_t> missing(n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        if (src.is_missing(r)) {
            missing[r] = 1;
            continue;
        }
        if (spec.kind == TransformKind::label_encode) {
            const auto it = std::lower_bound(spec.categories.begin(), spec.categories.end(), src.text(r));
            values[r] = static_cast<double>(it != spec.categories.end() && *it == src.text(r) ? it - spec.categories.begin()
                                                                                             : spec.categories.size());
        } else {
            const auto it = spec.encoding.find(src.text(r));
            values[r] = it == spec.encoding.end() ? spec.prior : it->second;
        }
    }
    out.push_back(Column::numeric(names[0], std::move(values), std::move(missing)));
    return out;
}

std::vector<Column> derive(const DataTable& table, const TransformSpec& spec) {
    if (spec.kind == TransformKind::indicator) {
        const auto m = hypothesis::eval_condition(*spec.condition, table);
        std::vector<double> v(m.size());
        for (std::size_t r = 0; r < m.size(); ++r) v[r] = m.is_true(r) ? 1.0 : 0.0;
        return {Column::numeric(spec.outputs()[0], std::move(v), m.missing)};
    }
    const Column& src = table.column(spec.source);
    if (numeric_source(spec.kind) && src.kind() != ColumnKind::numeric)
        fail(ErrorKind::schema, std::string(to_string(spec.kind)) + " needs numeric column '" + spec.source + "', found " +
                                    to_string(src.kind()));
    if (categorical_source(spec.kind) && src.kind() != ColumnKind::categorical)
        fail(ErrorKind::schema, std::string(to_string(spec.kind)) + " needs categorical column '" + spec.source + "', found " +
                                    to_string(src.kind()));
    if (spec.kind == TransformKind::bin) return {bin_column(src, spec, spec.outputs()[0])};
    if (categorical_source(spec.kind)) return encode_columns(src, spec);
    std::vector<std::uint8_t> missing;
    auto values = transform_numbers(src, spec, missing);
    return {Column::numeric(spec.outputs()[0], std::move(values), std::move(missing))};
}

DataTable append(const DataTable& table, std::vector<Column> columns) {
    for (const auto& c : columns)
        if (table.has_column(c.name())) fail(ErrorKind::schema, "output column '" + c.name() + "' already exists");
    return table.with_columns(std::move(columns));
}

void check_source(const DataTable& table, const TransformSpec& spec) {
    if (spec.kind == TransformKind::indicator) {
        const auto issues = hypothesis::typecheck(*spec.condition, table);
        if (!issues.empty()) fail(ErrorKind::schema, "indicator '" + spec.name + "': " + issues.front());
        return;
    }
    if (!table.has_column(spec.source)) fail(ErrorKind::schema, "no column named '" + spec.source + "'");
}

// Out-of-fold smoothed means; row r's value comes only from rows in other folds.
std::vector<double> oof_encoding(const Column& src, const Column& target, const std::string& positive, const TransformSpec& spec) {
    const std::size_t n = src.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(spec.seed, "target_encode:" + spec.source));
    rng.shuffle(order);
    const auto k = static_cast<std::size_t>(spec.folds);
    std::vector<std::size_t> fold(n);
    for (std::size_t i = 0; i < n; ++i) fold[order[i]] = i % k;

    std::vector<std::map<std::string, std::pair<double, double>>> per_fold(k);  // sum, count
    std::vector<double> fold_sum(k, 0.0), fold_count(k, 0.0);
    std::map<std::string, std::pair<double, double>> total;
    double all_sum = 0.0, all_count = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        if (src.is_missing(r) || target.is_missing(r)) continue;
        const double y = encode_target(target, r, positive);
        auto& cell = per_fold[fold[r]][src.text(r)];
        cell.first += y;
        cell.second += 1.0;
        auto& t = total[src.text(r)];
        t.first += y;
        t.second += 1.0;
        fold_sum[fold[r]] += y;
        fold_count[fold[r]] += 1.0;
        all_sum += y;
        all_count += 1.0;
    }
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        if (src.is_missing(r)) continue;
        const std::size_t f = fold[r];
        const double rest_count = all_count - fold_count[f];
        const double prior = rest_count > 0 ? (all_sum - fold_sum[f]) / rest_count : 0.0;
        double s = 0.0, c = 0.0;
        if (const auto it = total.find(src.text(r)); it != total.end()) {
            s = it->second.first, c = it->second.second;
            if (const auto jt = per_fold[f].find(src.text(r)); jt != per_fold[f].end()) {
                s -= jt->second.first;
                c -= jt->second.second;
            }
        }
        out[r] = (s + spec.smoothing * prior) / (c + spec.smoothing);
    }
    return out;
}

void fit_state(const DataTable& table, TransformSpec& spec) {
    if (spec.kind == TransformKind::indicator) return;
    const Column& src = table.column(spec.source);
    if (categorical_source(spec.kind)) {
        if (src.kind() != ColumnKind::categorical) return;  // derive reports it
        std::set<std::string> levels;
        for (std::size_t r = 0; r < src.size(); ++r)
            if (!src.is_missing(r)) levels.insert(src.text(r));
        if (spec.kind != TransformKind::target_encode) {
            spec.categories.assign(levels.begin(), levels.end());
            return;
        }
        if (spec.target.empty()) fail(ErrorKind::config, "target_encode of '" + spec.source + "' needs a target");
        if (!table.has_column(spec.target)) fail(ErrorKind::config, "target_encode target '" + spec.target + "' not in table");
        const Column& t = table.column(spec.target);
        std::string positive;
        if (t.kind() == ColumnKind::categorical) {
            std::set<std::string> tl;
            for (std::size_t r = 0; r < t.size(); ++r)
                if (!t.is_missing(r)) tl.insert(t.text(r));
            if (tl.size() != 2) fail(ErrorKind::config, "target_encode needs a numeric, boolean or two-level target");
            positive = *tl.rbegin();
        } else if (t.kind() == ColumnKind::datetime) {
            fail(ErrorKind::config, "target_encode needs a numeric, boolean or two-level target");
        }
        std::map<std::string, std::pair<double, double>> stats;
        double sum = 0.0, count = 0.0;
        for (std::size_t r = 0; r < src.size(); ++r) {
            if (src.is_missing(r) || t.is_missing(r)) continue;
            const double y = encode_target(t, r, positive);
            stats[src.text(r)].first += y;
            stats[src.text(r)].second += 1.0;
            sum += y;
            count += 1.0;
        }
        spec.prior = count > 0 ? sum / count : 0.0;
        spec.encoding.clear();
        for (const auto& [level, sc] : stats) spec.encoding[level] = (sc.first + spec.smoothing * spec.prior) / (sc.second + spec.smoothing);
        for (const auto& level : levels)
            if (!spec.encoding.count(level)) spec.encoding[level] = spec.prior;
        return;
    }
    if (src.kind() != ColumnKind::numeric) return;
    std::vector<double> x = src.present_numbers();
    switch (spec.kind) {
        case TransformKind::standard_scale: {
            if (x.empty()) break;
            const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
            double ss = 0.0;
            for (double v : x) ss += (v - m) * (v - m);
            const double sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
            spec.center = m;
            spec.scale = sd > 0.0 ? sd : 1.0;
            break;
        }
        case TransformKind::minmax_scale: {
            if (x.empty()) break;
            const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
            spec.center = *lo;
            spec.scale = *hi > *lo ? *hi - *lo : 1.0;
            break;
        }
        case TransformKind::robust_scale: {
            if (x.empty()) break;
            std::sort(x.begin(), x.end());
            spec.center = quantile_sorted(x, 0.5);
            const double iqr = quantile_sorted(x, 0.75) - quantile_sorted(x, 0.25);
            spec.scale = iqr > 0.0 ? iqr : 1.0;
            break;
        }
        case TransformKind::log:
        case TransformKind::sqrt: {
            std::vector<std::size_t> bad;
            for (std::size_t r = 0; r < src.size(); ++r) {
                if (src.is_missing(r)) continue;
                const double v = src.number(r);
                if (spec.kind == TransformKind::log ? v <= 0.0 : v < 0.0) bad.push_back(r);
            }
            if (!bad.empty())
                fail(ErrorKind::domain, std::string(to_string(spec.kind)) + " of '" + spec.source + "' needs " +
                                            (spec.kind == TransformKind::log ? "positive" : "non-negative") +
                                            " values; offending rows: " + join_rows(bad));
            break;
        }
        case TransformKind::power: {
            if (x.size() < 2) fail(ErrorKind::domain, "power transform of '" + spec.source + "' needs at least 2 values");
            const bool positive = std::all_of(x.begin(), x.end(), [](double v) { return v > 0.0; });
            spec.method = positive ? "box_cox" : "yeo_johnson";
            spec.lambda = positive ? box_cox_lambda(x) : yeo_johnson_lambda(x);
            break;
        }
        default:
            break;
    }
}

double pearson_r(const Column& a, const Column& b) {
    double sa = 0, sb = 0, n = 0;
    for (std::size_t r = 0; r < a.size(); ++r)
        if (!a.is_missing(r) && !b.is_missing(r)) sa += a.number(r), sb += b.number(r), n += 1;
    if (n < 2) return NAN;
    const double ma = sa / n, mb = sb / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t r = 0; r < a.size(); ++r) {
        if (a.is_missing(r) || b.is_missing(r)) continue;
        const double da = a.number(r) - ma, db = b.number(r) - mb;
        sab += da * db, saa += da * da, sbb += db * db;
    }
    return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : NAN;
}

}  // namespace

const char* to_string(TransformKind k) noexcept { return kKindNames[static_cast<int>(k)]; }

TransformKind parse_transform_kind(const std::string& text) {
    for (std::size_t i = 0; i < std::size(kKindNames); ++i)
        if (text == kKindNames[i]) return static_cast<TransformKind>(i);
    fail(ErrorKind::config, "unknown transform kind '" + text + "'");
}

void TransformSpec::validate() const {
    if (kind == TransformKind::indicator) {
        if (!condition) fail(ErrorKind::config, "indicator needs a condition");
        if (name.empty()) fail(ErrorKind::config, "indicator needs an output name");
    } else if (source.empty()) {
        fail(ErrorKind::config, std::string(to_string(kind)) + " needs a source column");
    }
    if (kind == TransformKind::bin) {
        if (edges.size() < 2) fail(ErrorKind::config, "bin needs at least two edges");
        for (std::size_t i = 0; i < edges.size(); ++i) {
            if (!std::isfinite(edges[i])) fail(ErrorKind::config, "bin edges must be finite");
            if (i && edges[i] <= edges[i - 1]) fail(ErrorKind::config, "bin edges must be strictly increasing");
        }
        if (labels.size() != edges.size() - 1)
            fail(ErrorKind::config, "bin needs " + std::to_string(edges.size() - 1) + " labels, got " + std::to_string(labels.size()));
    }
    if (kind == TransformKind::target_encode) {
        if (target.empty()) fail(ErrorKind::config, "target_encode of '" + source + "' needs a target");
        if (folds < 2) fail(ErrorKind::config, "target_encode needs at least 2 folds");
        if (!(smoothing >= 0.0)) fail(ErrorKind::config, "target_encode smoothing must be non-negative");
    }
}

std::vector<std::string> TransformSpec::outputs() const {
    if (kind == TransformKind::one_hot) {
        const std::string base = name.empty() ? "encoded_" + source : name;
        if (categories.size() == 2) return {base};
        std::vector<std::string> out;
        for (const auto& c : categories) out.push_back(base + "_" + c);
        return out;
    }
    return {name.empty() ? default_prefix(kind) + source : name};
}

json to_json(const TransformSpec& s) {
    json j = {{"kind", to_string(s.kind)}, {"source", s.source}, {"name", s.name}, {"provenance", s.provenance},
              {"fitted", s.fitted}};
    switch (s.kind) {
        case TransformKind::standard_scale:
        case TransformKind::minmax_scale:
        case TransformKind::robust_scale:
            j["center"] = s.center;
            j["scale"] = s.scale;
            break;
        case TransformKind::one_hot:
        case TransformKind::label_encode:
            j["categories"] = s.categories;
            break;
        case TransformKind::target_encode:
            j["target"] = s.target;
            j["smoothing"] = s.smoothing;
            j["folds"] = s.folds;
            j["seed"] = std::to_string(s.seed);
            j["encoding"] = s.encoding;
            j["prior"] = s.prior;
            break;
        case TransformKind::bin:
            j["edges"] = s.edges;
            j["labels"] = s.labels;
            j["open_ends"] = s.open_ends;
            break;
        case TransformKind::indicator:
            j["condition"] = s.condition ? hypothesis::to_string(*s.condition) : "";
            break;
        case TransformKind::power:
            j["method"] = s.method;
            j["lambda"] = s.lambda;
            break;
        default:
            break;
    }
    return j;
}

TransformSpec spec_from_json(const json& j) {
    try {
        TransformSpec s;
        s.kind = parse_transform_kind(j.at("kind").get<std::string>());
        s.source = j.value("source", "");
        s.name = j.value("name", "");
        s.provenance = j.value("provenance", std::vector<std::string>{});
        s.fitted = j.value("fitted", false);
        s.center = j.value("center", 0.0);
        s.scale = j.value("scale", 1.0);
        s.categories = j.value("categories", std::vector<std::string>{});
        s.target = j.value("target", "");
        s.smoothing = j.value("smoothing", 20.0);
        s.folds = j.value("folds", 5);
        if (j.contains("seed")) s.seed = std::stoull(j.at("seed").get<std::string>());
        s.encoding = j.value("encoding", std::map<std::string, double>{});
        s.prior = j.value("prior", 0.0);
        s.edges = j.value("edges", std::vector<double>{});
        s.labels = j.value("labels", std::vector<std::string>{});
        s.open_ends = j.value("open_ends", false);
        if (j.contains("condition")) s.condition = hypothesis::parse_expr(j.at("condition").get<std::string>());
        s.method = j.value("method", "");
        s.lambda = j.value("lambda", 1.0);
        s.validate();
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::config, std::string("malformed transform spec: ") + e.what());
    } catch (const std::logic_error& e) {
        fail(ErrorKind::config, std::string("malformed transform spec: ") + e.what());
    }
}

double box_cox(double x, double lambda) {
    return std::abs(lambda) < 1e-12 ? std::log(x) : std::expm1(lambda * std::log(x)) / lambda;
}

double yeo_johnson(double x, double lambda) {
    if (x >= 0.0) return std::abs(lambda) < 1e-12 ? std::log1p(x) : std::expm1(lambda * std::log1p(x)) / lambda;
    const double l2 = 2.0 - lambda;
    return std::abs(l2) < 1e-12 ? -std::log1p(-x) : -std::expm1(l2 * std::log1p(-x)) / l2;
}

double box_cox_lambda(const std::vector<double>& x) {
    double log_sum = 0.0;
    for (double v : x) {
        if (!(v > 0.0)) fail(ErrorKind::domain, "Box-Cox needs positive values");
        log_sum += std::log(v);
    }
    const double n = static_cast<double>(x.size());
    std::vector<double> y(x.size());
    return maximize([&](double l) {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = box_cox(x[i], l);
        const double var = pvariance(y);
        return var > 0.0 ? -0.5 * n * std::log(var) + (l - 1.0) * log_sum : -INFINITY;
    });
}

double yeo_johnson_lambda(const std::vector<double>& x) {
    double log_sum = 0.0;
    for (double v : x) log_sum += std::copysign(std::log1p(std::abs(v)), v);
    const double n = static_cast<double>(x.size());
    std::vector<double> y(x.size());
    return maximize([&](double l) {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = yeo_johnson(x[i], l);
        const double var = pvariance(y);
        return var > 0.0 ? -0.5 * n * std::log(var) + (l - 1.0) * log_sum : -INFINITY;
    });
}

Fitted fit_transform(const DataTable& table, TransformSpec spec, MetadataLedger* ledger) {
    spec.validate();
    check_source(table, spec);
    fit_state(table, spec);
    spec.fitted = true;
    std::vector<Column> columns = derive(table, spec);
    if (spec.kind == TransformKind::target_encode) {
        const Column& src = table.column(spec.source);
        const Column& t = table.column(spec.target);
        std::string positive;
        if (t.kind() == ColumnKind::categorical) {
            for (std::size_t r = 0; r < t.size(); ++r)
                if (!t.is_missing(r) && t.text(r) > positive) positive = t.text(r);
        }
        std::vector<std::uint8_t> missing(src.missing_mask().begin(), src.missing_mask().end());
        columns = {Column::numeric(spec.outputs()[0], oof_encoding(src, t, positive, spec), std::move(missing))};
    }
    std::size_t missing = 0;
    std::vector<std::string> names;
    for (const auto& c : columns) {
        missing += c.missing_count();
        names.push_back(c.name());
    }
    DataTable out = append(table, std::move(columns));
    LedgerEntry e = make_entry("preprocess", to_string(spec.kind), names);
    e.params["source"] = spec.kind == TransformKind::indicator ? hypothesis::to_string(*spec.condition) : spec.source;
    e.params["spec"] = to_json(spec).dump();
    e.results["outputs"] = static_cast<std::int64_t>(names.size());
    e.results["missing_cells"] = static_cast<std::int64_t>(missing);
    for (const auto& id : spec.provenance) e.provenance.push_back("hypothesis:" + id);
    record(ledger, std::move(e));
    return {std::move(out), std::move(spec)};
}

DataTable apply_fitted(const DataTable& table, const TransformSpec& spec) {
    if (!spec.fitted) fail(ErrorKind::config, std::string(to_string(spec.kind)) + " spec for '" + spec.source + "' is not fitted");
    check_source(table, spec);
    return append(table, derive(table, spec));
}

std::vector<TransformSpec> hypothesis_aware_plan(const DataTable& table, const std::vector<hypothesis::HypothesisVerdict>& verdicts,
                                                 const std::string& target, const PlanOptions& options) {
    using hypothesis::TestKind;
    std::map<std::string, std::vector<std::string>> involved;
    for (const auto& v : verdicts) {
        if (!v.accepted || v.error) continue;
        if (v.kind != TestKind::correlation && v.kind != TestKind::regression && v.kind != TestKind::mean_comparison) continue;
        for (const auto& c : v.columns) involved[c].push_back(v.doc_id);
    }
    const bool binning = options.bin_uninvolved && !verdicts.empty();
    std::vector<TransformSpec> plan;
    for (const Column& col : table.columns()) {
        const std::string& name = col.name();
        if (name == target || name.rfind("hyp_", 0) == 0) continue;
        const ColumnSummary s = summarize(col);
        if (col.kind() == ColumnKind::numeric) {
            if (s.distinct_count <= 2) continue;
            TransformSpec scale;
            scale.kind = TransformKind::standard_scale;
            scale.source = name;
            if (const auto it = involved.find(name); it != involved.end()) scale.provenance = it->second;
            plan.push_back(scale);
            if (std::abs(s.numeric->skewness) > options.skew_threshold) {
                TransformSpec p;
                p.kind = TransformKind::power;
                p.source = name;
                plan.push_back(p);
            }
            if (binning && !involved.count(name)) {
                std::vector<double> cuts = {s.numeric->q1, s.numeric->median, s.numeric->q3};
                std::vector<double> edges = {s.numeric->min};
                for (double c : cuts)
                    if (c > edges.back() && c < s.numeric->max) edges.push_back(c);
                edges.push_back(s.numeric->max);
                if (edges.size() >= 3) {
                    TransformSpec b;
                    b.kind = TransformKind::bin;
                    b.source = name;
                    b.edges = edges;
                    b.open_ends = true;
                    for (std::size_t i = 1; i < edges.size(); ++i) b.labels.push_back("q" + std::to_string(i));
                    plan.push_back(b);
                    TransformSpec oh;
                    oh.kind = TransformKind::one_hot;
                    oh.source = b.outputs()[0];
                    plan.push_back(oh);
                }
            }
        } else if (col.kind() == ColumnKind::categorical) {
            if (s.distinct_count < 2) continue;
            TransformSpec e;
            e.source = name;
            if (s.distinct_count <= options.one_hot_max_levels) {
                e.kind = TransformKind::one_hot;
            } else {
                e.kind = TransformKind::target_encode;
                e.target = target;
                e.seed = options.seed;
            }
            plan.push_back(e);
        }
    }
    return plan;
}

PlanResult fit_plan(const DataTable& table, std::vector<TransformSpec> specs, const std::string& target, MetadataLedger* ledger) {
    PlanResult out{table, {}};
    for (auto& s : specs) {
        Fitted f = fit_transform(out.table, std::move(s), ledger);
        out.table = std::move(f.table);
        out.specs.push_back(std::move(f.spec));
    }
    const Column* t = table.find(target);
    if (ledger && t && (t->kind() == ColumnKind::numeric || t->kind() == ColumnKind::boolean)) {
        LedgerEntry e = make_entry("preprocess", "correlation_diagnostic", {});
        e.params["target"] = target;
        double worst = 0.0;
        for (const auto& s : out.specs) {
            if (!numeric_source(s.kind) || s.kind == TransformKind::bin) continue;
            const std::string o = s.outputs()[0];
            const double before = pearson_r(out.table.column(s.source), *t);
            const double after = pearson_r(out.table.column(o), *t);
            e.results["r_before." + o] = make_scalar(before);
            e.results["r_after." + o] = make_scalar(after);
            if (std::isfinite(before) && std::isfinite(after)) worst = std::max(worst, std::abs(after - before));
            e.columns.push_back(o);
        }
        e.results["max_abs_change"] = worst;
        record(ledger, std::move(e));
    }
    return out;
}

DataTable apply_plan(const DataTable& table, const std::vector<TransformSpec>& fitted) {
    DataTable out = table;
    for (const auto& s : fitted) out = apply_fitted(out, s);
    return out;
}

}  // namespace autods::preprocess
