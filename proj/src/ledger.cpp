#include "autods/ledger.hpp"

#include <chrono>
#include <cmath>
#include <mutex>
#include <set>

#include "autods/error.hpp"
#include "autods/table.hpp"

namespace autods {

Scalar make_scalar(double value) {
    if (std::isnan(value)) return std::string("nan");
    if (std::isinf(value)) return std::string(value > 0 ? "inf" : "-inf");
    return value;
}

namespace {

nlohmann::json scalar_map_to_json(const ScalarMap& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, value] : m) {
        std::visit([&](const auto& v) { j[key] = v; }, value);
    }
    return j;
}

ScalarMap scalar_map_from_json(const nlohmann::json& j, const char* field) {
    if (!j.is_object()) fail(ErrorKind::data, std::string("ledger field '") + field + "' must be an object");
    ScalarMap m;
    for (const auto& [key, value] : j.items()) {
        if (value.is_boolean()) {
            m[key] = value.get<bool>();
        } else if (value.is_number_integer()) {
            m[key] = value.get<std::int64_t>();
        } else if (value.is_number_float()) {
            m[key] = value.get<double>();
        } else if (value.is_string()) {
            m[key] = value.get<std::string>();
        } else {
            fail(ErrorKind::data, std::string("ledger field '") + field + "." + key + "' is not a scalar");
        }
    }
    return m;
}

std::vector<std::string> strings_from_json(const nlohmann::json& j, const char* field) {
    if (!j.is_array()) fail(ErrorKind::data, std::string("ledger field '") + field + "' must be an array");
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) fail(ErrorKind::data, std::string("ledger field '") + field + "' must hold strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::string string_field(const nlohmann::json& j, const char* field) {
    const auto it = j.find(field);
    if (it == j.end() || !it->is_string()) {
        fail(ErrorKind::data, std::string("ledger entry field '") + field + "' missing or not a string");
    }
    return it->get<std::string>();
}

}  // namespace

nlohmann::json to_json(const LedgerEntry& e) {
    return nlohmann::json{{"stage", e.stage},
                          {"ts", e.ts},
                          {"action", e.action},
                          {"columns", e.columns},
                          {"params", scalar_map_to_json(e.params)},
                          {"results", scalar_map_to_json(e.results)},
                          {"provenance", e.provenance}};
}

LedgerEntry entry_from_json(const nlohmann::json& j) {
    static const std::set<std::string> kFields = {"stage",  "ts",      "action",    "columns",
                                                  "params", "results", "provenance"};
    if (!j.is_object()) fail(ErrorKind::data, "ledger entry must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!kFields.count(key)) fail(ErrorKind::data, "unknown ledger entry field '" + key + "'");
    }
    for (const auto& f : kFields) {
        if (!j.contains(f)) fail(ErrorKind::data, "ledger entry missing field '" + f + "'");
    }
    LedgerEntry e;
    e.stage = string_field(j, "stage");
    e.ts = string_field(j, "ts");
    e.action = string_field(j, "action");
    e.columns = strings_from_json(j.at("columns"), "columns");
    e.params = scalar_map_from_json(j.at("params"), "params");
    e.results = scalar_map_from_json(j.at("results"), "results");
    e.provenance = strings_from_json(j.at("provenance"), "provenance");
    return e;
}

void MetadataLedger::append(LedgerEntry entry) {
    if (entry.stage.empty()) fail(ErrorKind::config, "ledger entry needs a stage name");
    entries_.push_back(std::move(entry));
}

nlohmann::json MetadataLedger::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries_) arr.push_back(autods::to_json(e));
    return nlohmann::json{{"entries", std::move(arr)}};
}

MetadataLedger MetadataLedger::from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorKind::data, "ledger document must be an object");
    for (const auto& [key, _] : j.items()) {
        if (key != "entries") fail(ErrorKind::data, "unknown ledger field '" + key + "'");
    }
    const auto it = j.find("entries");
    if (it == j.end() || !it->is_array()) fail(ErrorKind::data, "ledger document needs an 'entries' array");
    MetadataLedger ledger;
    for (const auto& e : *it) ledger.append(entry_from_json(e));
    return ledger;
}

std::string MetadataLedger::dump() const { return to_json().dump(2) + "\n"; }

MetadataLedger MetadataLedger::parse(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::data, std::string("ledger is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

MetadataLedger ledger_append(MetadataLedger ledger, LedgerEntry entry) {
    ledger.append(std::move(entry));
    return ledger;
}

namespace {

std::mutex clock_mutex;
std::optional<std::string> fixed_ts;

}  // namespace

std::string ledger_timestamp() {
    {
        std::lock_guard lock(clock_mutex);
        if (fixed_ts) return *fixed_ts;
    }
    const auto now = std::chrono::system_clock::now();
    return format_iso8601(std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
}

void set_fixed_timestamp(std::optional<std::string> ts) {
    std::lock_guard lock(clock_mutex);
    fixed_ts = std::move(ts);
}

LedgerEntry make_entry(std::string stage, std::string action, std::vector<std::string> columns) {
    LedgerEntry e;
    e.stage = std::move(stage);
    e.action = std::move(action);
    e.columns = std::move(columns);
    e.ts = ledger_timestamp();
    return e;
}

void record(MetadataLedger* ledger, LedgerEntry entry) {
    if (ledger) ledger->append(std::move(entry));
}

}  // namespace autods
