#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace autods {

using Scalar = std::variant<bool, std::int64_t, double, std::string>;
using ScalarMap = std::map<std::string, Scalar>;

/// Non-finite doubles become the strings "nan", "inf", "-inf" so every entry stays valid JSON.
Scalar make_scalar(double value);

struct LedgerEntry {
    std::string stage;
    std::string ts;
    std::string action;
    std::vector<std::string> columns;
    ScalarMap params;
    ScalarMap results;
    std::vector<std::string> provenance;

    bool operator==(const LedgerEntry&) const = default;
};

nlohmann::json to_json(const LedgerEntry& entry);
/// Rejects unknown or missing fields and non-scalar parameter values.
LedgerEntry entry_from_json(const nlohmann::json& j);

/// Append-only record of every stage's actions, stats and provenance.
class MetadataLedger {
public:
    const std::vector<LedgerEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    /// Throws config error when the stage name is empty.
    void append(LedgerEntry entry);

    nlohmann::json to_json() const;
    static MetadataLedger from_json(const nlohmann::json& j);
    std::string dump() const;
    static MetadataLedger parse(const std::string& text);

    bool operator==(const MetadataLedger&) const = default;

private:
    std::vector<LedgerEntry> entries_;
};

MetadataLedger ledger_append(MetadataLedger ledger, LedgerEntry entry);

/// ISO-8601 UTC time for new entries, or the value given to set_fixed_timestamp.
std::string ledger_timestamp();
/// Pins ledger_timestamp (reproducible ledgers); nullopt restores the clock.
void set_fixed_timestamp(std::optional<std::string> ts);

LedgerEntry make_entry(std::string stage, std::string action, std::vector<std::string> columns = {});

/// Appends when `ledger` is non-null.
void record(MetadataLedger* ledger, LedgerEntry entry);

}  // namespace autods
