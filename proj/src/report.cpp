#include "autods/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <regex>
#include <set>

#include "autods/error.hpp"

namespace autods::report {

using hypothesis::Binding;
using hypothesis::HypothesisDoc;
using hypothesis::HypothesisVerdict;
using hypothesis::TestKind;
using nlohmann::json;

namespace {

constexpr double kZ = 1.959963984540054;

std::string printf_str(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    std::string s = buf;
    if (s == "-0" || s == "-0.0" || s == "-0.00" || s == "-0.000") s.erase(0, 1);
    return s;
}

std::string pct(double v) { return printf_str("%.1f", 100.0 * v); }

std::string num(double v) {
    const double a = std::fabs(v);
    if (a >= 1000.0) return printf_str("%.0f", v);
    if (a >= 1.0) return printf_str("%.2f", v);
    if (a == 0.0) return "0";
    return printf_str("%.3g", v);
}

std::string pvalue(double p) { return printf_str("%.2g", p); }

std::string capitalized(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

std::pair<std::string, std::string> group_names(const Binding& b, const std::vector<std::string>& labels) {
    if (b.condition) return {"rows where " + hypothesis::to_string(*b.condition), "other rows"};
    return {"rows with " + b.column + " = " + labels[0], "rows with " + b.column + " = " + labels[1]};
}

void mean_sd(const std::vector<double>& x, double& mean, double& var) {
    mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var = x.size() > 1 ? var / static_cast<double>(x.size() - 1) : 0.0;
}

std::string describe(const HypothesisVerdict& v) {
    const json& d = v.details;
    auto listing = [](const json& by_group, bool as_pct) {
        std::string out;
        for (const auto& [k, val] : by_group.items()) {
            if (!out.empty()) out += ", ";
            out += k + " " + (as_pct ? pct(val.get<double>()) + "%" : num(val.get<double>()));
        }
        return out;
    };
    if (d.contains("rates")) return "rates by group: " + listing(d["rates"], true);
    if (d.contains("means") && d["means"].is_object()) return "means by group: " + listing(d["means"], false);
    if (d.contains("flagged")) return "flagged " + std::to_string(d["flagged"].get<long long>()) + " rows";
    return "statistic " + num(v.result.statistic) + ", p " + pvalue(v.result.p_value);
}

}  // namespace

Effect effect_size(const HypothesisDoc& doc, const HypothesisVerdict& verdict, const DataTable& table) {
    Effect e;
    const auto& plan = doc.test;
    const json& d = verdict.details;
    const Binding* group = plan.binding("group_by");
    const bool two_group_rate = plan.kind == TestKind::proportion_comparison && d.contains("rates") && d["rates"].size() == 2;
    const bool two_group_mean = (plan.kind == TestKind::mean_comparison || plan.kind == TestKind::median_comparison ||
                                 plan.kind == TestKind::distribution_comparison) &&
                                d.contains("means") && d["means"].size() == 2;
    if (group && (two_group_rate || two_group_mean)) {
        const auto split = hypothesis::split_groups(*group, table);
        std::tie(e.group_a, e.group_b) = group_names(*group, split.labels);
        const auto& sizes = d["group_sizes"];
        e.n_a = sizes[split.labels[0]].get<std::size_t>();
        e.n_b = sizes[split.labels[1]].get<std::size_t>();
        double se = 0.0;
        if (two_group_rate) {
            e.kind = "rate";
            e.subject = plan.binding("outcome")->column;
            e.level = d["positive_level"].get<std::string>();
            e.a = d["rates"][split.labels[0]].get<double>();
            e.b = d["rates"][split.labels[1]].get<double>();
            se = std::sqrt(e.a * (1 - e.a) / static_cast<double>(e.n_a) + e.b * (1 - e.b) / static_cast<double>(e.n_b));
        } else {
            e.kind = "mean";
            e.subject = plan.binding("value")->column;
            const Column& v = table.column(e.subject);
            std::vector<double> xa, xb;
            for (std::size_t i = 0; i < table.n_rows(); ++i) {
                if (split.group[i] < 0 || v.is_missing(i)) continue;
                (split.group[i] == 0 ? xa : xb).push_back(v.number(i));
            }
            double va = 0.0, vb = 0.0;
            mean_sd(xa, e.a, va);
            mean_sd(xb, e.b, vb);
            se = std::sqrt(va / static_cast<double>(xa.size()) + vb / static_cast<double>(xb.size()));
        }
        e.difference = e.a - e.b;
        if (e.b != 0.0) e.relative = e.a / e.b - 1.0;
        e.ci_low = e.difference - kZ * se;
        e.ci_high = e.difference + kZ * se;
        return e;
    }
    if (plan.kind == TestKind::correlation && d.contains("r")) {
        e.kind = "correlation";
        e.driver = plan.binding("x")->column;
        e.subject = plan.binding("y")->column;
        e.a = e.difference = d["r"].get<double>();
        e.n_a = verdict.result.n_used;
        const double z = std::atanh(std::clamp(e.a, -0.999999999999, 0.999999999999));
        const double h = e.n_a > 3 ? kZ / std::sqrt(static_cast<double>(e.n_a) - 3.0) : INFINITY;
        e.ci_low = std::tanh(z - h);
        e.ci_high = std::tanh(z + h);
        return e;
    }
    if (plan.kind == TestKind::regression && d.contains("slope")) {
        e.kind = "slope";
        e.driver = plan.binding("x")->column;
        e.subject = plan.binding("y")->column;
        e.a = e.difference = d["slope"].get<double>();
        e.n_a = verdict.result.n_used;
        const double se = d["slope_se"].get<double>();
        e.ci_low = e.a - kZ * se;
        e.ci_high = e.a + kZ * se;
        return e;
    }
    e.summary = describe(verdict);
    return e;
}

namespace {

json effect_json(const Effect& e) {
    json j = {{"kind", e.kind}};
    if (!e.directional()) {
        j["summary"] = e.summary;
        return j;
    }
    j["subject"] = e.subject;
    json shown;
    if (e.kind == "rate" || e.kind == "mean") {
        const bool rate = e.kind == "rate";
        j.update({{"group_a", e.group_a}, {"group_b", e.group_b}, {"a", e.a}, {"b", e.b}, {"n_a", e.n_a}, {"n_b", e.n_b}});
        if (rate) j["level"] = e.level;
        auto show = [&](double v) { return rate ? pct(v) : num(v); };
        shown = {{"a", show(e.a)}, {"b", show(e.b)}, {"difference", show(e.difference)}, {"ci_low", show(e.ci_low)},
                 {"ci_high", show(e.ci_high)}};
        if (e.relative) {
            j["relative"] = *e.relative;
            shown["relative"] = printf_str("%.0f", std::fabs(100.0 * *e.relative));
        }
    } else {
        j.update({{"driver", e.driver}, {"n", e.n_a}});
        shown = {{"value", num(e.a)}, {"ci_low", num(e.ci_low)}, {"ci_high", num(e.ci_high)}};
    }
    j.update({{"difference", e.difference}, {"ci_low", e.ci_low}, {"ci_high", e.ci_high}, {"confidence", 95}, {"display", shown}});
    return j;
}

std::string sentence(const json& f) {
    const json& e = f["effect"];
    const std::string kind = e["kind"];
    if (kind == "descriptive") return capitalized(f["statement"].get<std::string>()) + ": " + e["summary"].get<std::string>() + ".";
    const json& s = e["display"];
    const std::string ci = "95% CI " + s["ci_low"].get<std::string>() + " to " + s["ci_high"].get<std::string>();
    const std::string subject = e["subject"];
    if (kind == "rate" || kind == "mean") {
        const std::string a = e["group_a"], b = e["group_b"];
        const bool up = e["a"].get<double>() >= e["b"].get<double>();
        if (kind == "rate") {
            const std::string what = subject + " = " + e["level"].get<std::string>();
            const std::string numbers = s["a"].get<std::string>() + "% vs " + s["b"].get<std::string>() + "% for " + b +
                                        "; difference " + s["difference"].get<std::string>() + " points, " + ci;
            if (!s.contains("relative")) return capitalized(a) + " have " + what + " at " + numbers + ".";
            return capitalized(a) + " are " + s["relative"].get<std::string>() + "% " + (up ? "more" : "less") + " likely to have " + what +
                   " (" + numbers + ").";
        }
        const std::string numbers = s["a"].get<std::string>() + " vs " + s["b"].get<std::string>() + " for " + b + "; difference " +
                                    s["difference"].get<std::string>() + ", " + ci;
        if (!s.contains("relative")) return capitalized(a) + " average " + subject + " of " + numbers + ".";
        return capitalized(a) + " have " + s["relative"].get<std::string>() + "% " + (up ? "higher" : "lower") + " average " + subject +
               " (" + numbers + ").";
    }
    const std::string driver = e["driver"];
    const bool up = e["difference"].get<double>() >= 0.0;
    if (kind == "correlation")
        return capitalized(subject) + " " + (up ? "rises" : "falls") + " with " + driver + " (r = " + s["value"].get<std::string>() + ", " +
               ci + ").";
    return "Each unit of " + driver + " moves " + subject + " by " + s["value"].get<std::string>() + " (" + ci + ").";
}

std::pair<std::string, std::string> action_and_kpi(const json& e) {
    const std::string kind = e["kind"];
    const std::string subject = e["subject"];
    if (kind == "rate" || kind == "mean") {
        const std::string a = e["group_a"], b = e["group_b"];
        const bool up = e["a"].get<double>() >= e["b"].get<double>();
        const std::string what = kind == "rate" ? subject + " = " + e["level"].get<std::string>() + " rate" : "average " + subject;
        const std::string action = up ? "Act on " + a + " first when working on " + what + ", since it carries the higher value."
                                      : "Find what sets " + a + " apart from " + b + " and extend it to " + b + ", since " + a +
                                            " shows the lower " + what + ".";
        return {action, what + ", " + a + " vs " + b};
    }
    const std::string driver = e["driver"];
    const bool up = e["difference"].get<double>() >= 0.0;
    return {"Track " + driver + " as a leading indicator of " + subject + "; the two move " + (up ? "together." : "in opposite directions."),
            subject + " against " + driver};
}

const model::CvResult* chosen_cv(const model::ModelReport& m) {
    if (m.chosen_kind == "single") return &m.search.winner();
    for (const auto& e : m.ensembles)
        if (e.label == m.chosen_label) return &e;
    return nullptr;
}

}  // namespace

json build_report(const Inputs& in, MetadataLedger* ledger) {
    if (!in.verdicts) fail(ErrorKind::config, "report needs the verdict list");
    const auto& verdicts = *in.verdicts;
    std::map<std::string, const HypothesisDoc*> docs;
    if (in.docs)
        for (const auto& d : *in.docs) docs[d.id] = &d;

    std::vector<const HypothesisVerdict*> accepted;
    std::size_t tested = 0;
    for (const auto& v : verdicts) {
        if (!v.error) ++tested;
        if (v.accepted && !v.error) accepted.push_back(&v);
    }
    std::stable_sort(accepted.begin(), accepted.end(), [](const HypothesisVerdict* a, const HypothesisVerdict* b) {
        if (a->adjusted_p != b->adjusted_p) return a->adjusted_p < b->adjusted_p;
        return a->doc_id < b->doc_id;
    });

    // hypothesis id -> engineered features citing it, and model importances
    std::map<std::string, double> importance;
    if (in.model) {
        for (const auto& [name, v] : in.model->importances) importance[name] = v;
        const auto [lo, hi] = std::minmax_element(importance.begin(), importance.end(),
                                                  [](const auto& a, const auto& b) { return a.second < b.second; });
        if (importance.empty() || hi->second - lo->second <= 1e-12) importance.clear();
    }
    std::map<std::string, std::vector<std::string>> cited;
    if (in.features)
        for (const auto& r : in.features->kept)
            for (const auto& id : r.spec.provenance) cited[id].push_back(r.spec.name);

    json findings = json::array(), recs = json::array(), monitoring = json::array();
    for (const HypothesisVerdict* v : accepted) {
        Effect e;
        const auto it = docs.find(v->doc_id);
        if (it != docs.end() && in.table) {
            e = effect_size(*it->second, *v, *in.table);
        } else {
            e.summary = describe(*v);
        }
        json f = {{"id", v->doc_id},
                  {"statement", v->statement},
                  {"test", hypothesis::to_string(v->kind)},
                  {"p_value", pvalue(v->result.p_value)},
                  {"adjusted_p", pvalue(v->adjusted_p)},
                  {"descriptive", v->descriptive},
                  {"effect", effect_json(e)}};
        f["sentence"] = sentence(f);

        LedgerEntry entry = make_entry("report", "finding", v->columns);
        entry.params["hypothesis"] = v->doc_id;
        entry.results["effect"] = e.kind;
        if (e.directional()) {
            entry.results["a"] = make_scalar(e.a);
            if (e.kind == "rate" || e.kind == "mean") entry.results["b"] = make_scalar(e.b);
            entry.results["difference"] = make_scalar(e.difference);
            entry.results["ci_low"] = make_scalar(e.ci_low);
            entry.results["ci_high"] = make_scalar(e.ci_high);
        }
        entry.provenance.push_back("hypothesis:" + v->doc_id);
        record(ledger, std::move(entry));

        if (e.directional() && !v->descriptive) {
            auto [action, kpi] = action_and_kpi(f["effect"]);
            json evidence = json::array();
            std::vector<std::string> names = cited[v->doc_id];
            if (v->indicator_column) names.insert(names.begin(), *v->indicator_column);
            for (const auto& n : names) {
                json item = {{"feature", n}};
                if (const auto imp = importance.find(n); imp != importance.end()) item["importance"] = printf_str("%.4f", imp->second);
                evidence.push_back(std::move(item));
            }
            recs.push_back({{"finding", v->doc_id},
                            {"action", action},
                            {"kpi", kpi},
                            {"provenance", {{"hypothesis", v->doc_id}, {"model_evidence", std::move(evidence)}}}});
            const json& s = f["effect"]["display"];
            const std::string unit = e.kind == "rate" ? "%" : "";
            const std::string baseline = e.kind == "rate" || e.kind == "mean"
                                             ? s["a"].get<std::string>() + unit + " vs " + s["b"].get<std::string>() + unit
                                             : s["value"].get<std::string>();
            monitoring.push_back({{"kpi", kpi}, {"baseline", baseline}, {"cadence", "monthly"}, {"hypothesis", v->doc_id}});
        }
        findings.push_back(std::move(f));
    }

    json model = nullptr;
    if (in.model) {
        const auto& m = *in.model;
        const model::CvResult* cv = chosen_cv(m);
        json metrics = json::array();
        for (const auto& [name, value] : m.holdout.values()) {
            json row = {{"name", name}, {"holdout", printf_str("%.4f", value)}};
            if (cv && cv->mean.count(name)) row["cv_mean"] = printf_str("%.4f", cv->mean.at(name));
            metrics.push_back(std::move(row));
        }
        json top = json::array();
        // uniform importances (knn, linear ensembles without coefficients) rank nothing
        const auto [lo, hi] = std::minmax_element(m.importances.begin(), m.importances.end(),
                                                  [](const auto& a, const auto& b) { return a.second < b.second; });
        const bool informative = !m.importances.empty() && hi->second - lo->second > 1e-12;
        for (std::size_t i = 0; informative && i < m.importances.size() && i < 5; ++i)
            top.push_back({{"feature", m.importances[i].first}, {"importance", printf_str("%.4f", m.importances[i].second)}});
        const std::string primary = model::primary_metric(m.design.task);
        model = {{"task", model::to_string(m.design.task)},
                 {"chosen", m.chosen_label},
                 {"kind", m.chosen_kind},
                 {"primary_metric", primary},
                 {"cv_primary", printf_str("%.4f", m.cv_primary)},
                 {"holdout_primary", printf_str("%.4f", m.holdout.get(primary))},
                 {"holdout_rows", m.holdout_rows},
                 {"metrics", std::move(metrics)},
                 {"top_features", std::move(top)},
                 {"warnings", m.holdout.warnings}};
        monitoring.push_back({{"kpi", "holdout " + primary + " of the deployed model"},
                              {"baseline", printf_str("%.4f", m.holdout.get(primary))},
                              {"cadence", "each retraining"},
                              {"hypothesis", nullptr}});
    }

    const std::size_t engineered = in.features ? in.features->kept.size() : 0;
    json report = {{"title", "Analysis report: " + in.target},
                   {"target", in.target},
                   {"hypotheses_tested", tested},
                   {"hypotheses_accepted", accepted.size()},
                   {"features_engineered", engineered},
                   {"findings", std::move(findings)},
                   {"model", std::move(model)},
                   {"recommendations", std::move(recs)},
                   {"monitoring", std::move(monitoring)},
                   {"timeline",
                    {"Now: record every KPI below at its baseline value.",
                     "Monthly: recompute each KPI on new data and compare with its baseline.",
                     "Quarterly: re-run the analysis and check that each finding still holds."}},
                   {"notes", in.notes}};

    LedgerEntry done = make_entry("report", "render", {});
    done.results["findings"] = static_cast<std::int64_t>(accepted.size());
    done.results["recommendations"] = static_cast<std::int64_t>(report["recommendations"].size());
    record(ledger, std::move(done));
    return report;
}

std::string render_markdown(const json& r) {
    std::string md = "# " + r.at("title").get<std::string>() + "\n\n";
    const auto tested = r.at("hypotheses_tested").get<std::size_t>();
    const auto accepted = r.at("hypotheses_accepted").get<std::size_t>();
    md += std::to_string(accepted) + " of " + std::to_string(tested) + " tested hypotheses were accepted; " +
          std::to_string(r.at("features_engineered").get<std::size_t>()) + " engineered features were kept.\n\n";

    md += "## Key Findings\n\n";
    if (r.at("findings").empty()) {
        md += "No statistically validated findings. The sections below summarise the model only.\n\n";
    } else {
        for (const auto& f : r["findings"])
            md += "- **" + f["id"].get<std::string>() + "**: " + f["sentence"].get<std::string>() + " (" + f["test"].get<std::string>() +
                  ", p = " + f["p_value"].get<std::string>() + ", adjusted p = " + f["adjusted_p"].get<std::string>() + ")\n";
        md += "\n";
    }

    md += "## Model Performance\n\n";
    const json& m = r.at("model");
    if (m.is_null()) {
        md += "No model was trained.\n\n";
    } else {
        md += "Chosen model: `" + m["chosen"].get<std::string>() + "` (" + m["kind"].get<std::string>() + ", " +
              m["task"].get<std::string>() + "), scored on " + std::to_string(m["holdout_rows"].get<std::size_t>()) +
              " holdout rows.\n\n| Metric | Holdout | CV mean |\n|---|---|---|\n";
        for (const auto& row : m["metrics"])
            md += "| " + row["name"].get<std::string>() + " | " + row["holdout"].get<std::string>() + " | " +
                  (row.contains("cv_mean") ? row["cv_mean"].get<std::string>() : std::string("n/a")) + " |\n";
        md += "\n";
        if (!m["top_features"].empty()) {
            md += "Most important features:";
            bool first = true;
            for (const auto& t : m["top_features"]) {
                md += std::string(first ? " " : ", ") + "`" + t["feature"].get<std::string>() + "` (" + t["importance"].get<std::string>() + ")";
                first = false;
            }
            md += ".\n\n";
        }
        for (const auto& w : m["warnings"]) md += "> " + w.get<std::string>() + "\n\n";
    }

    md += "## Recommendations\n\n";
    if (r.at("recommendations").empty()) {
        md += "No recommendations: there is no accepted finding with a measurable effect to act on.\n\n";
    } else {
        for (const auto& rec : r["recommendations"]) {
            md += "- " + rec["action"].get<std::string>() + " KPI: " + rec["kpi"].get<std::string>() + ". Evidence: hypothesis `" +
                  rec["provenance"]["hypothesis"].get<std::string>() + "`";
            for (const auto& ev : rec["provenance"]["model_evidence"]) {
                md += ", feature `" + ev["feature"].get<std::string>() + "`";
                if (ev.contains("importance")) md += " (importance " + ev["importance"].get<std::string>() + ")";
            }
            md += ".\n";
        }
        md += "\n";
    }

    md += "## Monitoring\n\n";
    for (const auto& k : r.at("monitoring"))
        md += "- [ ] " + k["kpi"].get<std::string>() + ": baseline " + k["baseline"].get<std::string>() + ", review " +
              k["cadence"].get<std::string>() + "\n";
    if (!r["monitoring"].empty()) md += "\n";
    for (const auto& t : r.at("timeline")) md += "- " + t.get<std::string>() + "\n";

    if (!r.at("notes").empty()) {
        md += "\n## Notes\n\n";
        for (const auto& n : r["notes"]) md += "- " + n.get<std::string>() + "\n";
    }
    return md;
}

std::vector<std::string> numeric_tokens(const std::string& text) {
    static const std::regex re(R"(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)");
    std::vector<std::string> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) out.push_back(it->str());
    return out;
}

std::vector<std::string> check_integrity(const json& report, const std::string& markdown, const std::vector<HypothesisVerdict>& verdicts) {
    std::vector<std::string> issues;
    const std::string dumped = report.dump();
    const auto known_list = numeric_tokens(dumped);
    const std::set<std::string> known(known_list.begin(), known_list.end());
    for (const auto& t : numeric_tokens(markdown))
        if (!known.count(t)) issues.push_back("number " + t + " in report.md is not in report.json");
    std::set<std::string> ok;
    for (const auto& v : verdicts)
        if (v.accepted && !v.error) ok.insert(v.doc_id);
    for (const auto& rec : report.at("recommendations")) {
        const std::string id = rec.at("provenance").at("hypothesis");
        if (!ok.count(id)) issues.push_back("recommendation cites " + id + ", which is not an accepted verdict");
    }
    return issues;
}

}  // namespace autods::report
