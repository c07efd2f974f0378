#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace noisebench {

// Shapes that do not line up (matrix products, arch vs params, feature dims).
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A caller broke a documented precondition (stale cache, t > T, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Invalid or inconsistent configuration (rates out of range, missing mapping, unknown names).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf showed up where training cannot continue.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed binary payload. `offset` is the byte position where decoding failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Transition-matrix estimation could not produce a row for some classes.
class EstimationError : public std::runtime_error {
public:
    EstimationError(const std::string& what, std::vector<std::size_t> classes)
        : std::runtime_error(what), classes_(std::move(classes)) {}
    const std::vector<std::size_t>& classes() const noexcept { return classes_; }

private:
    std::vector<std::size_t> classes_;
};

// Prints a one-line warning to stderr. Silenced when NOISEBENCH_QUIET is set.
void warn(const std::string& message);

}  // namespace noisebench
