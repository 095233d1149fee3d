#pragma once

#include <stdexcept>
#include <string>

namespace dass {

// Exception hierarchy. The CLI maps these to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageError : Error {
    using Error::Error;
};

// Missing, malformed or inconsistent input files.
struct DataError : Error {
    using Error::Error;
};

// Non-finite losses or gradients.
struct NumericalError : Error {
    using Error::Error;
};

}  // namespace dass
