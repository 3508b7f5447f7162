#include "autods/error.hpp"

namespace autods {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::config: return "config";
        case ErrorKind::data: return "data";
        case ErrorKind::schema: return "schema";
        case ErrorKind::domain: return "domain";
        case ErrorKind::validation: return "validation";
        case ErrorKind::stage: return "stage";
        case ErrorKind::budget: return "budget";
        case ErrorKind::transport: return "transport";
    }
    return "unknown";
}

namespace {

std::string join_issues(const std::vector<std::string>& issues) {
    std::string msg = "validation failed";
    for (const auto& i : issues) msg += "; " + i;
    return msg;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : Error(ErrorKind::validation, join_issues(issues)), issues_(std::move(issues)) {}

}  // namespace autods
