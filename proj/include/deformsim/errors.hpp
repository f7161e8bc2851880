#pragma once

#include <stdexcept>
#include <string>

namespace deformsim {

/// Shapes or settings that do not agree with each other.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
    ConfigError(std::string field_path, const std::string& what)
        : std::invalid_argument(field_path + ": " + what), field_path_(std::move(field_path)) {}

    /// Dotted path of the offending config field, empty when not field-specific.
    const std::string& field_path() const noexcept { return field_path_; }

private:
    std::string field_path_;
};

/// A value supplied by the caller is outside the operation's domain.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A documented precondition of a numeric primitive was broken by the caller.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Non-saturating fixed-point storage or accumulation went out of range.
class OverflowError : public std::overflow_error {
public:
    OverflowError(std::string stage, const std::string& what)
        : std::overflow_error(stage + ": " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Index bookkeeping disagrees with the data it describes.
class DataCorruptionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace deformsim
