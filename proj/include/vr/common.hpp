#pragma once

#include <stdexcept>
#include <string>

namespace vr {

// Error taxonomy shared across the library. The CLI maps these onto process
// exit codes (usage/argument = 1, data/parse = 2, numeric = 3).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ValueError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace vr
