#include "autods/proposer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <regex>
#include <set>
#include <sstream>

#include <httplib.h>

#include "autods/error.hpp"

namespace autods::proposer {

using hypothesis::Binding;
using hypothesis::BindingForm;
using hypothesis::Comparator;
using hypothesis::Expr;
using hypothesis::TestKind;
using nlohmann::json;

json to_json(const ColumnSummary& s) {
    json out = {{"name", s.name},
                {"kind", to_string(s.kind)},
                {"n_rows", s.n_rows},
                {"missing", s.missing_count},
                {"distinct", s.distinct_count}};
    if (s.numeric) {
        const auto& n = *s.numeric;
        out["numeric"] = {{"mean", n.mean}, {"std", n.std},       {"min", n.min},
                          {"q1", n.q1},     {"median", n.median}, {"q3", n.q3},
                          {"max", n.max},   {"skewness", n.skewness}, {"integer_valued", n.integer_valued}};
    }
    if (s.categorical) out["categorical"] = {{"mode", s.categorical->mode}, {"mode_frequency", s.categorical->mode_frequency}};
    return out;
}

// ------------------------------------------------------------------ templates

namespace {

bool low_cardinality(const ColumnSummary& s) {
    if (s.distinct_count < 2 || s.distinct_count > hypothesis::kMaxGroupLevels) return false;
    if (s.kind == ColumnKind::boolean || s.kind == ColumnKind::categorical) return true;
    return s.kind == ColumnKind::numeric && s.numeric && s.numeric->integer_valued;
}

bool classification_target(const ColumnSummary& s) {
    if (s.kind == ColumnKind::boolean || s.kind == ColumnKind::categorical) return true;
    return s.kind == ColumnKind::numeric && low_cardinality(s);
}

std::string format_number(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

Binding group(const std::string& column) {
    Binding b = Binding::of_column(column);
    b.form = BindingForm::group;
    return b;
}

std::optional<Expr> level_indicator(const ColumnSummary& s) {
    switch (s.kind) {
        case ColumnKind::boolean: return Expr::column(s.name);
        case ColumnKind::categorical:
            if (!s.categorical) return std::nullopt;
            return Expr::compare(Comparator::eq, Expr::column(s.name), Expr::literal(s.categorical->mode));
        case ColumnKind::numeric:
            if (s.distinct_count == 2 && s.numeric) {
                return Expr::compare(Comparator::eq, Expr::column(s.name), Expr::literal(s.numeric->max));
            }
            return std::nullopt;
        default: return std::nullopt;
    }
}

std::string level_phrase(const ColumnSummary& s) {
    if (s.kind == ColumnKind::boolean) return s.name + " = true";
    if (s.kind == ColumnKind::categorical && s.categorical) return s.name + " = " + s.categorical->mode;
    if (s.numeric) return s.name + " = " + format_number(s.numeric->max);
    return s.name;
}

class IdMaker {
public:
    std::string make(const std::string& column, const std::string& suffix) {
        std::string base;
        for (char c : column) base += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
        if (base.empty()) base = "col";
        if (!suffix.empty()) base += "_" + suffix;
        std::string id = base;
        for (int k = 2; !used_.insert(id).second; ++k) id = base + "_" + std::to_string(k);
        return id;
    }

private:
    std::set<std::string> used_;
};

}  // namespace

std::vector<HypothesisDoc> enumerate_templates(const std::vector<ColumnSummary>& summaries, const std::string& target,
                                               std::size_t limit) {
    auto t = std::find_if(summaries.begin(), summaries.end(), [&](const ColumnSummary& s) { return s.name == target; });
    if (t == summaries.end()) fail(ErrorKind::config, "target column '" + target + "' is not in the table");
    const bool classify = classification_target(*t);
    std::vector<HypothesisDoc> out;
    IdMaker ids;
    auto push = [&](HypothesisDoc d) {
        if (out.size() < limit) out.push_back(std::move(d));
    };
    for (const auto& s : summaries) {
        if (out.size() >= limit) break;
        if (s.name == target || s.name.rfind("hyp_", 0) == 0 || s.distinct_count < 2) continue;
        if (s.kind == ColumnKind::datetime) continue;
        const bool low = low_cardinality(s);
        if (low) {
            HypothesisDoc d;
            d.id = ids.make(s.name, "");
            d.indicator = level_indicator(s);
            d.test.bindings.emplace("group_by", group(s.name));
            if (classify) {
                d.test.kind = TestKind::proportion_comparison;
                d.test.bindings.emplace("outcome", Binding::of_column(target));
                d.statement = s.distinct_count == 2 ? "The " + target + " rate differs for rows with " + level_phrase(s)
                                                    : "The " + target + " rate differs across " + s.name + " levels";
            } else {
                d.test.kind = s.distinct_count == 2 ? TestKind::mean_comparison : TestKind::anova;
                d.test.bindings.emplace("value", Binding::of_column(target));
                d.statement = s.distinct_count == 2 ? "Mean " + target + " differs for rows with " + level_phrase(s)
                                                    : "Mean " + target + " differs across " + s.name + " levels";
            }
            push(std::move(d));
        }
        if (s.kind != ColumnKind::numeric || !s.numeric || s.distinct_count <= 2) continue;
        if (classify) {
            const std::pair<const char*, double> cuts[] = {{"q1", s.numeric->q1}, {"median", s.numeric->median}, {"q3", s.numeric->q3}};
            std::vector<double> seen;
            for (const auto& [label, cut] : cuts) {
                if (!(cut > s.numeric->min) || std::find(seen.begin(), seen.end(), cut) != seen.end()) continue;
                seen.push_back(cut);
                HypothesisDoc d;
                d.id = ids.make(s.name, std::string("lt_") + label);
                d.test.kind = TestKind::proportion_comparison;
                Expr cond = Expr::compare(Comparator::lt, Expr::column(s.name), Expr::literal(cut));
                d.test.bindings.emplace("group_by", Binding::of_condition(cond));
                d.test.bindings.emplace("outcome", Binding::of_column(target));
                d.indicator = cond;
                d.statement = "The " + target + " rate differs for rows with " + s.name + " < " + format_number(cut);
                push(std::move(d));
            }
        } else if (!low) {
            HypothesisDoc d;
            d.id = ids.make(s.name, "corr");
            d.test.kind = TestKind::correlation;
            d.test.bindings.emplace("x", Binding::of_column(s.name));
            d.test.bindings.emplace("y", Binding::of_column(target));
            d.statement = s.name + " is correlated with " + target;
            push(std::move(d));
        }
    }
    return out;
}

// ------------------------------------------------------------------ accounting

void ProposalBudget::validate() const {
    if (max_hypotheses == 0) fail(ErrorKind::config, "budget.max_hypotheses must be positive");
    if (max_llm_calls == 0) fail(ErrorKind::config, "budget.max_llm_calls must be positive");
    if (max_tokens == 0) fail(ErrorKind::config, "budget.max_tokens must be positive");
    for (const auto& [model, p] : prices) {
        if (!(p.input_per_1k >= 0.0) || !(p.output_per_1k >= 0.0) || !std::isfinite(p.input_per_1k + p.output_per_1k)) {
            fail(ErrorKind::config, "prices for '" + model + "' must be non-negative");
        }
    }
}

double exchange_cost(std::size_t input_tokens, std::size_t output_tokens, const Price& price) {
    return static_cast<double>(input_tokens) * price.input_per_1k / 1000.0 +
           static_cast<double>(output_tokens) * price.output_per_1k / 1000.0;
}

json to_json(const LlmExchange& e) {
    return {{"model_name", e.model_name},
            {"prompt", e.prompt},
            {"response_text", e.response_text},
            {"input_tokens", e.input_tokens},
            {"output_tokens", e.output_tokens},
            {"cost", e.cost},
            {"parse_outcome", e.ok ? "ok" : "rejected"},
            {"reasons", e.reasons},
            {"repair", e.repair}};
}

LlmExchange exchange_from_json(const json& j) {
    try {
        LlmExchange e;
        e.model_name = j.at("model_name").get<std::string>();
        e.prompt = j.at("prompt").get<std::string>();
        e.response_text = j.at("response_text").get<std::string>();
        e.input_tokens = j.at("input_tokens").get<std::size_t>();
        e.output_tokens = j.at("output_tokens").get<std::size_t>();
        e.cost = j.at("cost").get<double>();
        e.ok = j.at("parse_outcome").get<std::string>() == "ok";
        e.reasons = j.at("reasons").get<std::vector<std::string>>();
        e.repair = j.at("repair").get<bool>();
        return e;
    } catch (const json::exception& ex) {
        fail(ErrorKind::data, std::string("malformed exchange record: ") + ex.what());
    }
}

std::string to_jsonl(const std::vector<LlmExchange>& exchanges) {
    std::string out;
    for (const auto& e : exchanges) out += to_json(e).dump() + "\n";
    return out;
}

// ------------------------------------------------------------------ replies

DocValidator schema_validator(const std::vector<ColumnSummary>& summaries) {
    std::vector<Column> cols;
    for (const auto& s : summaries) {
        switch (s.kind) {
            case ColumnKind::numeric: cols.push_back(Column::numeric(s.name, {})); break;
            case ColumnKind::boolean: cols.push_back(Column::boolean(s.name, {})); break;
            case ColumnKind::categorical: cols.push_back(Column::categorical(s.name, {})); break;
            case ColumnKind::datetime: cols.push_back(Column::datetime(s.name, {}, {})); break;
        }
    }
    auto schema = std::make_shared<DataTable>(std::move(cols));
    return [schema](const HypothesisDoc& d) { return hypothesis::check_schema(d, *schema); };
}

namespace {

std::optional<json> extract_json(const std::string& text) {
    auto attempt = [](const std::string& s) -> std::optional<json> {
        try {
            return json::parse(s);
        } catch (const json::parse_error&) {
            return std::nullopt;
        }
    };
    if (auto j = attempt(text)) return j;
    const std::size_t fence = text.find("```");
    if (fence != std::string::npos) {
        const std::size_t start = text.find('\n', fence);
        const std::size_t end = start == std::string::npos ? std::string::npos : text.find("```", start);
        if (end != std::string::npos) {
            if (auto j = attempt(text.substr(start + 1, end - start - 1))) return j;
        }
    }
    const std::size_t open = text.find_first_of("[{");
    const std::size_t close = text.find_last_of("]}");
    if (open != std::string::npos && close != std::string::npos && close > open) {
        if (auto j = attempt(text.substr(open, close - open + 1))) return j;
    }
    return std::nullopt;
}

}  // namespace

ParsedReply parse_reply(const std::string& text, const DocValidator& validator) {
    ParsedReply out;
    const auto j = extract_json(text);
    if (!j) {
        out.issues.push_back("reply is not valid JSON");
        return out;
    }
    std::vector<json> items;
    if (j->is_array()) {
        items.assign(j->begin(), j->end());
    } else if (j->is_object() && j->contains("hypotheses") && (*j)["hypotheses"].is_array()) {
        items.assign((*j)["hypotheses"].begin(), (*j)["hypotheses"].end());
    } else if (j->is_object()) {
        items.push_back(*j);
    } else {
        out.issues.push_back("reply must be a JSON array of hypothesis documents");
        return out;
    }
    std::set<std::string> ids;
    for (std::size_t i = 0; i < items.size(); ++i) {
        std::string label = "hypothesis " + std::to_string(i);
        if (items[i].is_object() && items[i].contains("id") && items[i]["id"].is_string()) {
            label += " (" + items[i]["id"].get<std::string>() + ")";
        }
        try {
            HypothesisDoc d = hypothesis::doc_from_json(items[i]);
            std::vector<std::string> problems = validator ? validator(d) : std::vector<std::string>{};
            if (!ids.insert(d.id).second) problems.push_back("duplicate id '" + d.id + "'");
            if (!problems.empty()) {
                for (const auto& p : problems) out.issues.push_back(label + ": " + p);
                continue;
            }
            out.docs.push_back(std::move(d));
        } catch (const ValidationError& e) {
            for (const auto& p : e.issues()) out.issues.push_back(label + ": " + p);
        }
    }
    return out;
}

std::string build_prompt(const std::vector<ColumnSummary>& summaries, const std::string& target, std::size_t max_docs) {
    json cols = json::array();
    for (const auto& s : summaries) cols.push_back(to_json(s));
    const json example = {
        {"id", "few_products"},
        {"statement", "Customers with fewer than two products leave more often"},
        {"test", {{"kind", "proportion_comparison"}, {"group_by", "NumOfProducts < 2"}, {"outcome", "Exited"}}},
        {"alpha", 0.05},
        {"indicator", "NumOfProducts < 2"}};
    std::string p;
    p += "Propose statistical hypotheses about a tabular dataset. Reply with JSON only: an array of at most " +
         std::to_string(max_docs) + " hypothesis documents.\n\n";
    p += "Document fields: id (letters, digits and _, unique), statement (one plain sentence), test (kind, bindings and optional "
         "params), alpha (optional, default 0.05, between 0 and 1), indicator (optional row condition marking the rows the "
         "statement is about).\n\n";
    p += "Conditions compare a column with a number, a quoted string, true/false or another column using < <= > >= = !=, "
         "combined with and, or, not and parentheses. No arithmetic. Wrap column names that contain spaces in backticks.\n\n";
    p += "Test kinds (bindings name columns; group_by takes a condition or a grouping column):\n" + hypothesis::catalog_json().dump() + "\n\n";
    p += "Example document:\n" + example.dump() + "\n\n";
    p += "Target column: " + target + "\n";
    p += "Column summaries:\n" + cols.dump() + "\n";
    return p;
}

// ------------------------------------------------------------------ client

namespace {

struct Url {
    std::string scheme_host_port;
    std::string path;
};

Url parse_url(const std::string& url) {
    static const std::regex pattern(R"(^(https?)://([^/:]+)(:\d+)?(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, pattern)) fail(ErrorKind::config, "invalid LLM endpoint url '" + url + "'");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (m[1] == "https") fail(ErrorKind::config, "https endpoints need a build with AUTODS_WITH_TLS=ON");
#endif
    return {m[1].str() + "://" + m[2].str() + m[3].str(), m[4].matched ? m[4].str() : "/"};
}

std::size_t estimate_tokens(const std::string& text) { return text.size() / 4 + 1; }

struct Reply {
    std::string content;
    std::size_t input_tokens = 0;
    std::size_t output_tokens = 0;
    bool usage_reported = true;
};

Reply post_chat(const LlmEndpoint& endpoint, const json& messages, std::size_t max_completion) {
    const Url url = parse_url(endpoint.url);
    httplib::Client client(url.scheme_host_port);
    const auto secs = static_cast<time_t>(endpoint.timeout_seconds);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);
    const json body = {{"model", endpoint.model}, {"messages", messages}, {"temperature", 0}, {"max_tokens", max_completion}};
    const auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) fail(ErrorKind::transport, "LLM request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) fail(ErrorKind::transport, "LLM endpoint answered HTTP " + std::to_string(res->status));
    Reply r;
    try {
        const json j = json::parse(res->body);
        r.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (j.contains("usage") && j["usage"].is_object()) {
            r.input_tokens = j["usage"].value("prompt_tokens", std::size_t{0});
            r.output_tokens = j["usage"].value("completion_tokens", std::size_t{0});
        } else {
            r.usage_reported = false;
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::transport, std::string("LLM response is not a chat completion: ") + e.what());
    }
    if (!r.usage_reported) {
        r.input_tokens = estimate_tokens(messages.dump());
        r.output_tokens = estimate_tokens(r.content);
    }
    return r;
}

}  // namespace

Proposal llm_propose(const std::vector<ColumnSummary>& summaries, const std::string& target, const ProposalBudget& budget,
                     const LlmEndpoint& endpoint, const DocValidator& validator) {
    budget.validate();
    auto price = budget.prices.find(endpoint.model);
    if (price == budget.prices.end()) fail(ErrorKind::config, "no prices configured for model '" + endpoint.model + "'");
    const DocValidator check = validator ? validator : schema_validator(summaries);

    Proposal out;
    std::set<std::string> ids;
    json messages = json::array({{{"role", "system"}, {"content", "You are a careful data scientist. Answer with JSON only."}},
                                 {{"role", "user"}, {"content", build_prompt(summaries, target, budget.max_hypotheses)}}});

    auto call = [&](bool repair) -> std::optional<ParsedReply> {
        if (out.exchanges.size() >= budget.max_llm_calls) {
            out.budget_exhausted = true;
            out.warnings.push_back("LLM call budget exhausted");
            return std::nullopt;
        }
        const std::size_t remaining = budget.max_tokens - std::min(budget.max_tokens, out.total_tokens);
        const std::size_t prompt_estimate = estimate_tokens(messages.dump());
        if (prompt_estimate + 16 > remaining) {
            out.budget_exhausted = true;
            out.warnings.push_back("token budget exhausted before the next LLM call");
            return std::nullopt;
        }
        const Reply reply = post_chat(endpoint, messages, remaining - prompt_estimate);
        LlmExchange ex;
        ex.model_name = endpoint.model;
        ex.prompt = messages.dump();
        ex.response_text = reply.content;
        ex.input_tokens = reply.input_tokens;
        ex.output_tokens = reply.output_tokens;
        ex.cost = exchange_cost(ex.input_tokens, ex.output_tokens, price->second);
        ex.repair = repair;
        if (!reply.usage_reported) out.warnings.push_back("endpoint reported no token usage; counts are estimates");
        out.total_tokens += ex.input_tokens + ex.output_tokens;
        out.total_cost += ex.cost;
        ParsedReply parsed;
        if (out.total_tokens > budget.max_tokens) {
            out.budget_exhausted = true;
            out.warnings.push_back("token budget exceeded by the endpoint; reply discarded");
            ex.reasons.push_back("token budget exceeded");
        } else {
            parsed = parse_reply(reply.content, check);
            ex.reasons = parsed.issues;
            ex.ok = parsed.issues.empty();
        }
        out.exchanges.push_back(std::move(ex));
        messages.push_back({{"role", "assistant"}, {"content", reply.content}});
        return parsed;
    };
    auto take = [&](ParsedReply& parsed) {
        for (auto& d : parsed.docs) {
            if (out.docs.size() >= budget.max_hypotheses) {
                out.warnings.push_back("reply exceeded max_hypotheses; extra docs dropped");
                break;
            }
            if (ids.insert(d.id).second) out.docs.push_back(std::move(d));
        }
    };

    auto first = call(false);
    if (!first) return out;
    take(*first);
    if (!first->issues.empty() && !out.budget_exhausted) {
        std::string request = "Your reply had these problems:\n";
        for (const auto& i : first->issues) request += "- " + i + "\n";
        request += "Reply with the corrected complete JSON array.";
        messages.push_back({{"role", "user"}, {"content", request}});
        if (auto second = call(true)) take(*second);
    }
    return out;
}

}  // namespace autods::proposer
