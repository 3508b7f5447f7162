#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace autods {

enum class ErrorKind {
    config,     // malformed or inconsistent configuration
    data,       // unreadable or malformed input data
    schema,     // column missing / wrong kind / duplicate name
    domain,     // numeric precondition violated (dof <= 0, log of negative, ...)
    validation, // hypothesis document failed validation
    stage,      // a pipeline stage could not complete
    budget,     // LLM budget exhausted
    transport,  // HTTP failure talking to an LLM endpoint
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Validation failure that carries every violation found, not just the first.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> issues);

    const std::vector<std::string>& issues() const noexcept { return issues_; }

private:
    std::vector<std::string> issues_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace autods
