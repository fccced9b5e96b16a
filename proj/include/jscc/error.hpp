#pragma once

#include <stdexcept>
#include <string>

namespace jscc {

// Error taxonomy. Each class maps to a distinct CLI exit code (see tools/).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor / matrix dimension disagreements. Message names both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Numeric domain violations (log of non-positive, negative variance, ...).
struct DomainError : Error {
    using Error::Error;
};

// API contract violations (non-scalar backward root, repeated backward, ...).
struct ContractError : Error {
    using Error::Error;
};

// Invalid model / run configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Divergence or non-finite loss during training.
struct TrainingError : Error {
    using Error::Error;
};

// Iterative numeric routine failed to converge.
struct NumericError : Error {
    using Error::Error;
};

// File ingestion, checkpoint and report I/O.
struct IoError : Error {
    using Error::Error;
};

}  // namespace jscc
