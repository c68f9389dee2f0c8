// errors.hpp: exception types shared by all bhs modules.
#pragma once

#include <stdexcept>
#include <string>

namespace bhs {

// Invalid parameters or inputs outside an operation's domain.
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A phase-space point outside the physical region of the reduced classical model.
struct DomainError : ParameterError {
    using ParameterError::ParameterError;
};

// Numerical breakdown: eigensolver failure, norm collapse, step underflow.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The prefactor square-root branch cannot be followed between two samples.
struct BranchAmbiguityError : NumericError {
    using NumericError::NumericError;
};

// Malformed configuration text or inconsistent experiment settings.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace bhs
