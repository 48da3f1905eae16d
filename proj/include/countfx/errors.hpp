#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace countfx {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A schema-named column is absent, or a role is mapped inconsistently.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Data violates a panel invariant (outcome present where selection = 0, duplicate keys, ...).
class DataError : public Error {
public:
    using Error::Error;
};

/// No rows survive a row filter, or an outcome has a single class.
class DegenerateSampleError : public Error {
public:
    using Error::Error;
};

/// Argument outside the support of a distribution (e.g. y = 0 under zero truncation).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Non-finite or out-of-range distribution parameter.
class ParameterError : public Error {
public:
    using Error::Error;
};

class OptimizationError : public Error {
public:
    OptimizationError(const std::string& what, std::vector<double> trace)
        : Error(what), trace_(std::move(trace)) {}
    /// Log-likelihood values accepted before the failure.
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

class SeparationError : public Error {
public:
    SeparationError(const std::string& what, std::string column)
        : Error(what), column_(std::move(column)) {}
    const std::string& column() const noexcept { return column_; }

private:
    std::string column_;
};

class UnsupportedLinkError : public Error {
public:
    using Error::Error;
};

class SingularMatrixError : public Error {
public:
    using Error::Error;
};

/// LR statistic is negative beyond optimizer slack: the "larger" model fit worse.
class NestingError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& message)
        : Error(field + ": " + message), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Failure inside a named pipeline stage; the original message is kept.
class StageError : public Error {
public:
    enum class Cause { data, domain, fit, other };

    StageError(std::string stage, Cause cause, const std::string& message)
        : Error(stage + ": " + message), stage_(std::move(stage)), cause_(cause) {}
    const std::string& stage() const noexcept { return stage_; }
    Cause cause() const noexcept { return cause_; }

private:
    std::string stage_;
    Cause cause_;
};

class ReportError : public Error {
public:
    using Error::Error;
};

}  // namespace countfx
