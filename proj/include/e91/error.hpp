#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace e91 {

/// Bad argument to a pure function (non-finite phase, out-of-range fraction, ...).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A model or scenario configuration failed validation. Each message names
/// the offending key path.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
    explicit ConfigError(const std::string& problem)
        : ConfigError(std::vector<std::string>{problem}) {}

    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& items) {
        std::string out;
        for (const auto& item : items) {
            if (!out.empty()) out += "; ";
            out += item;
        }
        return out;
    }

    std::vector<std::string> problems_;
};

class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Cross-correlation histogram has no significant peak.
class NoCorrelation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientStatistics : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientKey : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Peer sent something the state machine does not accept.
class ProtocolViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CalibrationFailure : public std::runtime_error {
public:
    CalibrationFailure(const std::string& what, double low, double high)
        : std::runtime_error(what), low_(low), high_(high) {}

    /// Transmittance bracket explored when the search gave up.
    double low() const noexcept { return low_; }
    double high() const noexcept { return high_; }

private:
    double low_;
    double high_;
};

}  // namespace e91
