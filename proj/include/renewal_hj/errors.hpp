#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace renewal_hj {

enum class ErrorKind {
    NonEvaluableField,
    AssumptionViolated,
    MomentOverflow,
    DivergentIntegral,
    OutOfBracket,
    DegenerateDerivative,
    PaddingExceeded,
    MonitorBreach,
    CFLViolation,
    NegativeDensity,
    ExpOverflow,
    SingularHessian,
    OutOfDomain,
    ConfigError,
    IoError,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NonEvaluableField: return "NonEvaluableField";
        case ErrorKind::AssumptionViolated: return "AssumptionViolated";
        case ErrorKind::MomentOverflow: return "MomentOverflow";
        case ErrorKind::DivergentIntegral: return "DivergentIntegral";
        case ErrorKind::OutOfBracket: return "OutOfBracket";
        case ErrorKind::DegenerateDerivative: return "DegenerateDerivative";
        case ErrorKind::PaddingExceeded: return "PaddingExceeded";
        case ErrorKind::MonitorBreach: return "MonitorBreach";
        case ErrorKind::CFLViolation: return "CFLViolation";
        case ErrorKind::NegativeDensity: return "NegativeDensity";
        case ErrorKind::ExpOverflow: return "ExpOverflow";
        case ErrorKind::SingularHessian: return "SingularHessian";
        case ErrorKind::OutOfDomain: return "OutOfDomain";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI exit code) can dispatch on it.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

/// Raised when a scenario fails one of the named model assumptions.
class AssumptionError : public Error {
public:
    AssumptionError(std::string assumption, const std::string& message)
        : Error(ErrorKind::AssumptionViolated, assumption + " (" + message + ")"),
          assumption_(std::move(assumption)) {}

    const std::string& assumption() const noexcept { return assumption_; }

private:
    std::string assumption_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace renewal_hj
