#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace vmp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user input: malformed config, unknown names, out-of-range parameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A caller broke an operation's precondition.
class ContractViolation : public Error {
public:
    using Error::Error;
};

class SimulationError : public Error {
public:
    using Error::Error;
};

class RegressionError : public Error {
public:
    using Error::Error;
};

// Both sides of a check are trivially zero; the result is flagged, not failed.
class DegenerateCase : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> changes)
        : Error(what), changes_(std::move(changes)) {}
    const std::vector<double>& changes() const { return changes_; }

private:
    std::vector<double> changes_;
};

} // namespace vmp
