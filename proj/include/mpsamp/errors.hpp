#pragma once

#include <stdexcept>
#include <string>

namespace mpsamp {

// Error hierarchy maps onto CLI exit codes: config -> 2, numeric -> 3, io -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DimensionError : ConfigError {
    using ConfigError::ConfigError;
};

struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace mpsamp
