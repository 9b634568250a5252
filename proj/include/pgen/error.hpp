#pragma once

#include <stdexcept>
#include <string>

namespace pgen {

// Error categories map onto CLI exit codes: config/format -> 2,
// staging/compatibility -> 3, numerical failure -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StagingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Programming-contract violations (shape mismatches etc).
struct ShapeError : std::logic_error {
    using std::logic_error::logic_error;
};

[[noreturn]] inline void shape_fail(const std::string& msg) { throw ShapeError(msg); }

}  // namespace pgen
