// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace camo {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape or axis mismatch between tensors.
struct DimensionError : Error {
    using Error::Error;
};

/// Invalid model or run configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// An API contract was violated (e.g. backward called twice).
struct ContractError : Error {
    using Error::Error;
};

/// Malformed user-supplied input (token ids, encodings, ...).
struct InputError : Error {
    using Error::Error;
};

/// A file could not be parsed; message carries the location.
struct ParseError : Error {
    using Error::Error;
};

/// A numeric operation produced NaN or Inf.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace camo
