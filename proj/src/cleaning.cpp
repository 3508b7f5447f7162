#include "autods/cleaning.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "autods/error.hpp"
#include "autods/model/model.hpp"
#include "autods/rng.hpp"
#include "autods/stats/inference.hpp"
#include "autods/stats/multivariate.hpp"

namespace autods::cleaning {

const char* to_string(NumericStrategy s) noexcept {
    switch (s) {
        case NumericStrategy::mean: return "mean";
        case NumericStrategy::median: return "median";
        case NumericStrategy::mice: return "mice";
        case NumericStrategy::forest: return "forest";
    }
    return "?";
}

const char* to_string(CategoricalStrategy s) noexcept {
    return s == CategoricalStrategy::mode ? "mode" : "missing_category";
}

const char* to_string(OutlierMethod m) noexcept { return m == OutlierMethod::zscore ? "zscore" : "iqr"; }

const char* to_string(OutlierAction a) noexcept {
    switch (a) {
        case OutlierAction::flag: return "flag";
        case OutlierAction::winsorize: return "winsorize";
        case OutlierAction::drop_row: return "drop_row";
    }
    return "?";
}

NumericStrategy parse_numeric_strategy(const std::string& text) {
    for (auto s : {NumericStrategy::mean, NumericStrategy::median, NumericStrategy::mice, NumericStrategy::forest}) {
        if (text == to_string(s)) return s;
    }
    fail(ErrorKind::config, "unknown numeric imputation strategy '" + text + "'");
}

CategoricalStrategy parse_categorical_strategy(const std::string& text) {
    if (text == "mode") return CategoricalStrategy::mode;
    if (text == "missing_category") return CategoricalStrategy::missing_category;
    fail(ErrorKind::config, "unknown categorical imputation strategy '" + text + "'");
}

OutlierMethod parse_outlier_method(const std::string& text) {
    if (text == "zscore") return OutlierMethod::zscore;
    if (text == "iqr") return OutlierMethod::iqr;
    fail(ErrorKind::config, "unknown outlier method '" + text + "'");
}

OutlierAction parse_outlier_action(const std::string& text) {
    for (auto a : {OutlierAction::flag, OutlierAction::winsorize, OutlierAction::drop_row}) {
        if (text == to_string(a)) return a;
    }
    fail(ErrorKind::config, "unknown outlier action '" + text + "'");
}

void CleaningPlan::validate() const {
    if (!(z_threshold > 0.0)) fail(ErrorKind::config, "outlier z threshold must be positive");
    if (!(iqr_k > 0.0)) fail(ErrorKind::config, "outlier IQR multiplier must be positive");
    std::set<std::string> seen;
    for (const auto& c : columns) {
        if (!seen.insert(c.column).second) fail(ErrorKind::config, "column '" + c.column + "' planned twice");
        if (c.numeric.has_value() == c.categorical.has_value()) {
            fail(ErrorKind::config, "column '" + c.column + "' needs exactly one strategy");
        }
    }
}

const ColumnPlan* CleaningPlan::find(const std::string& column) const {
    for (const auto& c : columns) {
        if (c.column == column) return &c;
    }
    return nullptr;
}

nlohmann::json to_json(const CleaningPlan& plan) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : plan.columns) {
        cols.push_back({{"column", c.column},
                        {"kind", autods::to_string(c.kind)},
                        {"missing", c.missing},
                        {"missing_fraction", c.missing_fraction},
                        {"strategy", c.numeric ? to_string(*c.numeric) : to_string(*c.categorical)},
                        {"outliers", c.outliers}});
    }
    return {{"columns", cols},
            {"outlier_method", to_string(plan.outlier_method)},
            {"outlier_action", to_string(plan.outlier_action)},
            {"z_threshold", plan.z_threshold},
            {"iqr_k", plan.iqr_k}};
}

CleaningPlan plan_cleaning(const DataTable& table, const CleaningConfig& config) {
    if (table.n_rows() == 0) fail(ErrorKind::data, "cannot plan cleaning for an empty table");
    CleaningPlan plan;
    plan.outlier_method = config.outlier_method;
    plan.outlier_action = config.outlier_action;
    plan.z_threshold = config.z_threshold;
    plan.iqr_k = config.iqr_k;
    const std::set<std::string> excluded(config.exclude.begin(), config.exclude.end());
    for (const auto& col : table.columns()) {
        if (col.name() == config.target || excluded.count(col.name())) continue;
        ColumnPlan c;
        c.column = col.name();
        c.kind = col.kind();
        c.missing = col.missing_count();
        c.missing_fraction = static_cast<double>(c.missing) / static_cast<double>(table.n_rows());
        switch (col.kind()) {
            case ColumnKind::numeric:
                if (const auto o = config.numeric_overrides.find(c.column); o != config.numeric_overrides.end()) {
                    c.numeric = o->second;
                } else if (c.missing_fraction < config.median_below) {
                    c.numeric = NumericStrategy::median;
                } else if (c.missing_fraction <= config.mice_up_to) {
                    c.numeric = NumericStrategy::mice;
                } else {
                    c.numeric = NumericStrategy::forest;
                }
                c.outliers = config.outliers;
                break;
            case ColumnKind::datetime: c.numeric = NumericStrategy::median; break;
            case ColumnKind::boolean: c.categorical = CategoricalStrategy::mode; break;
            case ColumnKind::categorical:
                if (const auto o = config.categorical_overrides.find(c.column); o != config.categorical_overrides.end()) {
                    c.categorical = o->second;
                } else {
                    c.categorical = c.missing_fraction > config.categorical_missing_above ? CategoricalStrategy::missing_category
                                                                                         : CategoricalStrategy::mode;
                }
                break;
        }
        plan.columns.push_back(std::move(c));
    }
    plan.validate();
    return plan;
}

namespace {

std::string most_frequent(const Column& col) {
    std::map<std::string, std::size_t> counts;
    for (std::size_t i = 0; i < col.size(); ++i) {
        if (!col.is_missing(i)) ++counts[col.text(i)];
    }
    std::string best;
    std::size_t best_count = 0;
    for (const auto& [value, count] : counts) {  // map order: ties go to the smaller string
        if (count > best_count) {
            best = value;
            best_count = count;
        }
    }
    return best;
}

Column filled_numeric(const Column& col, const std::vector<double>& values) {
    std::vector<double> out(col.numbers().begin(), col.numbers().end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (col.is_missing(i)) out[i] = values[i];
    }
    return Column::numeric(col.name(), std::move(out));
}

Column filled_constant(const Column& col, double value) { return filled_numeric(col, std::vector<double>(col.size(), value)); }

}  // namespace

DataTable impute_simple(const DataTable& table, const std::string& column, const ColumnPlan& plan, MetadataLedger* ledger) {
    const Column& col = table.column(column);
    const std::size_t missing = col.missing_count();
    std::string strategy = plan.numeric ? to_string(*plan.numeric) : to_string(*plan.categorical);
    LedgerEntry entry = make_entry("cleaning", "impute_" + strategy, {column});
    entry.results["imputed"] = static_cast<std::int64_t>(missing);
    if (missing == 0) {
        record(ledger, std::move(entry));
        return table;
    }
    const auto present = col.is_numeric_like() ? col.present_numbers() : std::vector<double>{};
    Column out = col;
    switch (col.kind()) {
        case ColumnKind::numeric:
        case ColumnKind::datetime: {
            double fill = 0.0;
            if (present.empty()) {
                entry.results["warning"] = std::string("column entirely missing: filled with 0");
            } else if (plan.numeric == NumericStrategy::mean) {
                fill = stats::mean(present);
            } else {
                fill = stats::median(present);
            }
            if (col.kind() == ColumnKind::numeric) {
                out = filled_constant(col, fill);
            } else {
                const auto epoch = static_cast<std::int64_t>(std::llround(fill));
                std::vector<std::int64_t> secs(col.size());
                std::vector<std::string> text(col.texts().begin(), col.texts().end());
                for (std::size_t i = 0; i < col.size(); ++i) {
                    secs[i] = col.is_missing(i) ? epoch : static_cast<std::int64_t>(col.number(i));
                    if (col.is_missing(i)) text[i] = format_iso8601(epoch);
                }
                out = Column::datetime(col.name(), std::move(secs), std::move(text));
            }
            entry.params["fill"] = make_scalar(fill);
            break;
        }
        case ColumnKind::boolean: {
            std::size_t ones = 0;
            for (double v : present) ones += v != 0.0;
            const bool fill = 2 * ones > present.size();
            std::vector<bool> values(col.size());
            for (std::size_t i = 0; i < col.size(); ++i) values[i] = col.is_missing(i) ? fill : col.truth(i);
            out = Column::boolean(col.name(), values);
            entry.params["fill"] = fill;
            break;
        }
        case ColumnKind::categorical: {
            std::string fill = plan.categorical == CategoricalStrategy::missing_category ? kMissingCategory : most_frequent(col);
            if (fill.empty()) fill = kMissingCategory;  // nothing observed to take the mode of
            std::vector<std::string> values(col.texts().begin(), col.texts().end());
            for (std::size_t i = 0; i < col.size(); ++i) {
                if (col.is_missing(i)) values[i] = fill;
            }
            out = Column::categorical(col.name(), std::move(values));
            entry.params["fill"] = fill;
            break;
        }
    }
    record(ledger, std::move(entry));
    return table.replace_column(std::move(out));
}

namespace {

enum class Learner { ridge, forest };

DataTable impute_chained(const DataTable& table, const std::vector<std::string>& targets, std::uint64_t seed,
                         const ChainedOptions& options, MetadataLedger* ledger, Learner learner) {
    const char* action = learner == Learner::ridge ? "impute_mice" : "impute_forest";
    LedgerEntry entry = make_entry("cleaning", action, targets);
    entry.params["seed"] = static_cast<std::int64_t>(seed);
    entry.params["iterations"] = static_cast<std::int64_t>(options.iterations);
    if (learner == Learner::ridge) {
        entry.params["lambda"] = options.lambda;
    } else {
        entry.params["trees"] = static_cast<std::int64_t>(options.trees);
        entry.params["depth"] = static_cast<std::int64_t>(options.depth);
    }
    const double n = static_cast<double>(table.n_rows());
    for (const auto& t : targets) {
        if (table.column(t).kind() != ColumnKind::numeric) {
            fail(ErrorKind::schema, std::string(action) + " target '" + t + "' is not numeric");
        }
    }
    std::vector<std::string> warnings;
    std::vector<std::string> active;  // targets imputed by the chained model
    DataTable result = table;
    for (const auto& t : targets) {
        const Column& col = table.column(t);
        if (col.missing_count() == 0) continue;
        if (static_cast<double>(col.missing_count()) > 0.9 * n) {
            warnings.push_back(t + " is more than 90% missing: median fallback");
            ColumnPlan p;
            p.numeric = NumericStrategy::median;
            result = impute_simple(result, t, p);
            continue;
        }
        active.push_back(t);
    }
    // predictor pool: targets plus usable numeric columns
    std::vector<std::string> pool;
    const std::set<std::string> excluded(options.exclude.begin(), options.exclude.end());
    auto consider = [&](const Column& c) {
        if (c.kind() != ColumnKind::numeric || excluded.count(c.name())) return;
        if (std::find(pool.begin(), pool.end(), c.name()) != pool.end()) return;
        if (std::find(active.begin(), active.end(), c.name()) == active.end() &&
            static_cast<double>(c.missing_count()) > 0.9 * n) {
            return;
        }
        pool.push_back(c.name());
    };
    if (options.predictors.empty()) {
        for (const auto& c : table.columns()) consider(c);
    } else {
        for (const auto& name : options.predictors) consider(table.column(name));
    }
    for (const auto& t : active) consider(table.column(t));
    if (!active.empty() && pool.size() < 2) {
        for (const auto& t : active) {
            warnings.push_back(t + " has no usable predictor: median fallback");
            ColumnPlan p;
            p.numeric = NumericStrategy::median;
            result = impute_simple(result, t, p);
        }
        active.clear();
    }
    if (!active.empty()) {
        std::stable_sort(active.begin(), active.end(), [&](const std::string& a, const std::string& b) {
            return table.column(a).missing_count() < table.column(b).missing_count();
        });
        const std::size_t rows = table.n_rows(), d = pool.size();
        Matrix w(rows, d);
        std::vector<std::size_t> target_col;
        for (std::size_t j = 0; j < d; ++j) {
            const Column& c = table.column(pool[j]);
            const auto present = c.present_numbers();
            const double fill = present.empty() ? 0.0 : stats::median(present);
            for (std::size_t i = 0; i < rows; ++i) w(i, j) = c.is_missing(i) ? fill : c.number(i);
        }
        for (const auto& t : active) {
            target_col.push_back(static_cast<std::size_t>(std::find(pool.begin(), pool.end(), t) - pool.begin()));
        }
        for (int it = 0; it < options.iterations; ++it) {
            for (std::size_t a = 0; a < active.size(); ++a) {
                const Column& col = table.column(active[a]);
                const std::size_t tj = target_col[a];
                std::vector<std::size_t> other;
                for (std::size_t j = 0; j < d; ++j) {
                    if (j != tj) other.push_back(j);
                }
                std::vector<std::size_t> observed, missing;
                for (std::size_t i = 0; i < rows; ++i) (col.is_missing(i) ? missing : observed).push_back(i);
                const Matrix xs = w.select_cols(other);
                std::vector<double> y;
                for (std::size_t i : observed) y.push_back(w(i, tj));
                model::ModelSpec spec;
                spec.task = model::Task::regression;
                if (learner == Learner::ridge) {
                    spec.algorithm = model::Algorithm::ridge;
                    spec.params["lambda"] = options.lambda;
                } else {
                    spec.algorithm = model::Algorithm::random_forest;
                    spec.params["n_trees"] = options.trees;
                    spec.params["max_depth"] = options.depth;
                    spec.params["max_features"] = 1.0;
                }
                spec.seed = derive_seed(seed, static_cast<std::uint64_t>(it) * 1000003u + a);
                const auto m = model::train(spec, xs.select_rows(observed), y, {options.threads});
                const auto pred = m->predict(xs.select_rows(missing));
                for (std::size_t k = 0; k < missing.size(); ++k) w(missing[k], tj) = pred[k];
            }
        }
        for (std::size_t a = 0; a < active.size(); ++a) {
            const Column& col = table.column(active[a]);
            result = result.replace_column(filled_numeric(col, w.column(target_col[a])));
        }
    }
    for (const auto& t : targets) entry.results["imputed." + t] = static_cast<std::int64_t>(table.column(t).missing_count());
    for (std::size_t i = 0; i < warnings.size(); ++i) entry.results["warning." + std::to_string(i)] = warnings[i];
    record(ledger, std::move(entry));
    return result;
}

}  // namespace

DataTable impute_mice(const DataTable& table, const std::vector<std::string>& targets, std::uint64_t seed,
                      const ChainedOptions& options, MetadataLedger* ledger) {
    return impute_chained(table, targets, seed, options, ledger, Learner::ridge);
}

DataTable impute_forest(const DataTable& table, const std::vector<std::string>& targets, std::uint64_t seed,
                        const ChainedOptions& options, MetadataLedger* ledger) {
    return impute_chained(table, targets, seed, options, ledger, Learner::forest);
}

DataTable handle_outliers(const DataTable& table, const CleaningPlan& plan, MetadataLedger* ledger) {
    plan.validate();
    LedgerEntry entry = make_entry("cleaning", "outliers");
    entry.params["method"] = std::string(to_string(plan.outlier_method));
    entry.params["action"] = std::string(to_string(plan.outlier_action));
    entry.params[plan.outlier_method == OutlierMethod::zscore ? "z_threshold" : "iqr_k"] =
        plan.outlier_method == OutlierMethod::zscore ? plan.z_threshold : plan.iqr_k;
    DataTable out = table;
    std::vector<bool> drop(table.n_rows(), false);
    std::int64_t total = 0;
    for (const auto& cp : plan.columns) {
        if (!cp.outliers) continue;
        const Column* col = table.find(cp.column);
        if (!col || col->kind() != ColumnKind::numeric) continue;
        std::vector<std::size_t> rows;
        std::vector<double> values;
        for (std::size_t i = 0; i < col->size(); ++i) {
            if (col->is_missing(i)) continue;
            rows.push_back(i);
            values.push_back(col->number(i));
        }
        if (values.size() < 2) continue;
        const stats::Bounds b = plan.outlier_method == OutlierMethod::zscore ? stats::zscore_bounds(values, plan.z_threshold)
                                                                             : stats::iqr_bounds(values, plan.iqr_k);
        std::vector<bool> flags(col->size(), false);
        std::int64_t count = 0;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            if (values[k] < b.lower || values[k] > b.upper) {
                flags[rows[k]] = true;
                ++count;
            }
        }
        entry.columns.push_back(cp.column);
        entry.results["count." + cp.column] = count;
        total += count;
        if (count == 0) continue;
        entry.results["lower." + cp.column] = make_scalar(b.lower);
        entry.results["upper." + cp.column] = make_scalar(b.upper);
        switch (plan.outlier_action) {
            case OutlierAction::flag: {
                std::string name = cp.column + "__outlier";
                if (out.has_column(name)) fail(ErrorKind::schema, "column '" + name + "' already exists");
                out = out.with_column(Column::boolean(std::move(name), flags));
                break;
            }
            case OutlierAction::winsorize: {
                std::vector<double> clipped(col->numbers().begin(), col->numbers().end());
                for (std::size_t k = 0; k < rows.size(); ++k) clipped[rows[k]] = std::clamp(values[k], b.lower, b.upper);
                std::vector<std::uint8_t> mask(col->missing_mask().begin(), col->missing_mask().end());
                out = out.replace_column(Column::numeric(col->name(), std::move(clipped), std::move(mask)));
                break;
            }
            case OutlierAction::drop_row:
                for (std::size_t i = 0; i < flags.size(); ++i) drop[i] = drop[i] || flags[i];
                break;
        }
    }
    entry.results["total"] = total;
    if (plan.outlier_action == OutlierAction::drop_row) {
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < drop.size(); ++i) {
            if (!drop[i]) keep.push_back(i);
        }
        entry.results["rows_dropped"] = static_cast<std::int64_t>(drop.size() - keep.size());
        if (keep.size() != drop.size()) out = out.take_rows(keep);
    }
    record(ledger, std::move(entry));
    return out;
}

CleaningResult clean(const DataTable& table, const CleaningConfig& config, MetadataLedger* ledger) {
    CleaningResult r{table, plan_cleaning(table, config)};
    LedgerEntry plan_entry = make_entry("cleaning", "plan");
    for (const auto& c : r.plan.columns) {
        plan_entry.columns.push_back(c.column);
        plan_entry.params["strategy." + c.column] = std::string(c.numeric ? to_string(*c.numeric) : to_string(*c.categorical));
        plan_entry.results["missing_fraction." + c.column] = c.missing_fraction;
    }
    plan_entry.params["order"] = std::string("impute_then_outliers");
    record(ledger, std::move(plan_entry));

    std::vector<std::string> mice, forest;
    for (const auto& c : r.plan.columns) {
        if (c.numeric == NumericStrategy::mice) {
            mice.push_back(c.column);
        } else if (c.numeric == NumericStrategy::forest) {
            forest.push_back(c.column);
        } else if (c.missing > 0) {
            r.table = impute_simple(r.table, c.column, c, ledger);
        }
    }
    ChainedOptions chained;
    chained.exclude = config.exclude;
    if (!config.target.empty()) chained.exclude.push_back(config.target);
    chained.lambda = config.mice_lambda;
    chained.trees = config.forest_trees;
    chained.depth = config.forest_depth;
    chained.threads = config.threads;
    if (!mice.empty()) {
        chained.iterations = config.mice_iterations;
        r.table = impute_mice(r.table, mice, derive_seed(config.seed, "mice"), chained, ledger);
    }
    if (!forest.empty()) {
        chained.iterations = config.forest_iterations;
        r.table = impute_forest(r.table, forest, derive_seed(config.seed, "forest"), chained, ledger);
    }
    if (config.outliers) r.table = handle_outliers(r.table, r.plan, ledger);
    return r;
}

}  // namespace autods::cleaning
