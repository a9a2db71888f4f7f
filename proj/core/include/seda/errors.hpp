#pragma once

#include <stdexcept>
#include <string>

namespace seda {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape mismatches and malformed network specs.
struct ShapeError : Error {
    using Error::Error;
};

// File parsing and serialization problems (IDX, PGM, checkpoints).
struct IoError : Error {
    using Error::Error;
};

// Invalid run configuration (bad keys, out-of-range hyperparameters).
struct ConfigError : Error {
    using Error::Error;
};

// Non-finite values encountered during computation. Training aborts on these.
struct NumericError : Error {
    using Error::Error;
};

} // namespace seda
