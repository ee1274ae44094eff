#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sevnet {

/// Failure categories. The CLI maps each category onto a process exit code.
enum class ErrorCategory {
    Config,   // usage or configuration problem
    Data,     // malformed or inconsistent input data
    Numeric,  // non-finite values during computation
};

/// Every library failure is reported as an Error carrying a short machine
/// readable kind (e.g. "MissingColumn") and a human readable message.
class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, std::string kind, const std::string& message)
        : std::runtime_error(message), category_(category), kind_(std::move(kind)) {}

    [[nodiscard]] ErrorCategory category() const noexcept { return category_; }
    [[nodiscard]] const std::string& kind() const noexcept { return kind_; }

private:
    ErrorCategory category_;
    std::string kind_;
};

inline Error data_error(std::string kind, const std::string& message) {
    return {ErrorCategory::Data, std::move(kind), message};
}

inline Error config_error(std::string kind, const std::string& message) {
    return {ErrorCategory::Config, std::move(kind), message};
}

inline Error numeric_error(std::string kind, const std::string& message) {
    return {ErrorCategory::Numeric, std::move(kind), message};
}

inline int exit_code(ErrorCategory category) noexcept {
    switch (category) {
    case ErrorCategory::Config: return 1;
    case ErrorCategory::Data: return 2;
    case ErrorCategory::Numeric: return 3;
    }
    return 1;
}

} // namespace sevnet
