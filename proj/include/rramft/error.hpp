#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rramft {

// Tensor or layer shapes disagree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A configuration value is out of its valid range.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// An API was called in the wrong order (e.g. backward before forward).
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// NaN or Inf escaped a computation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training loss became non-finite.
class DivergenceError : public NumericError {
public:
    DivergenceError(std::size_t iteration, const std::string& what)
        : NumericError(what), iteration_(iteration) {}
    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

// Malformed file contents or unreadable file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A sweep needs a trained checkpoint that is absent and may not be trained.
class MissingCheckpointError : public std::runtime_error {
public:
    explicit MissingCheckpointError(const std::string& path)
        : std::runtime_error("missing checkpoint '" + path + "' and train_on_demand is off"), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

} // namespace rramft
