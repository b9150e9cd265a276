#pragma once

#include <stdexcept>
#include <string>

namespace handbio {

// Base for all library errors. Subclasses tag the failure category so
// callers (and the CLI) can map them to exit diagnostics.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension / layout mismatch between arguments.
struct ShapeError : Error {
    using Error::Error;
};

// Out-of-range or otherwise invalid parameter value.
struct ParamError : Error {
    using Error::Error;
};

// Bad input data: empty sets, non-finite values, malformed rows.
struct DataError : Error {
    using Error::Error;
};

// Operation called on an object in the wrong state (untrained model,
// unfitted calibration, backward without forward).
struct StateError : Error {
    using Error::Error;
};

// Dataset too small for the requested split.
struct CapacityError : Error {
    using Error::Error;
};

// Inconsistent configuration (class-list mismatch, missing artifact).
struct ConfigError : Error {
    using Error::Error;
};

// File I/O and serialization failures.
struct IoError : Error {
    using Error::Error;
};

// Optimization diverged (non-finite loss or parameters).
struct TrainError : Error {
    using Error::Error;
};

}  // namespace handbio
