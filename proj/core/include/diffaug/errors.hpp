#pragma once

#include <stdexcept>
#include <string>

namespace diffaug {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

// Shape or arity mismatch in a tensor op.
struct DimensionError : Error {
    using Error::Error;
};

// Non-finite value detected at an op boundary.
struct NumericError : Error {
    using Error::Error;
};

struct ContractError : Error {
    using Error::Error;
};

struct OptimizerError : Error {
    using Error::Error;
};

struct TrainingError : Error {
    using Error::Error;
};

// Free text that matches no modality rule.
struct UnmappableRecordError : Error {
    using Error::Error;
};

// Free text that matches an exclusion pattern.
struct ExcludedModalityError : Error {
    using Error::Error;
};

// Metric has no defined value on the given scores (e.g. no positives).
struct UndefinedMetricError : Error {
    using Error::Error;
};

// Synthesis aborted partway; message lists the classes already completed.
struct PartialPlanError : Error {
    using Error::Error;
};

}  // namespace diffaug
