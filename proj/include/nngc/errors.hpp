#pragma once

#include <stdexcept>
#include <string>

namespace nngc {

// Failure categories. The CLI maps each to a distinct exit code.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OptimizationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace nngc
