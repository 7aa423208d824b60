#pragma once

#include <stdexcept>
#include <string>

namespace fnls {

// Bad user input: CLI maps this to exit code 1.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A solver or certification failed: CLI maps this to exit code 2.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fnls
