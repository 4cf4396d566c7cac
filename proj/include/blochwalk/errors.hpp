#pragma once

#include <stdexcept>
#include <string>

namespace blochwalk {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Evaluation at a point where a transform is singular (e.g. the Jacobian at P = 0 or 1).
class SingularityError : public DomainError {
public:
    using DomainError::DomainError;
};

/// The requested distribution is a point mass; callers must handle the Dirac explicitly.
class DegenerateDistribution : public std::runtime_error {
public:
    DegenerateDistribution(const std::string& what, double location)
        : std::runtime_error(what), location_(location) {}

    /// Position of the point mass, in the variable of the failing call.
    double location() const noexcept { return location_; }

private:
    double location_;
};

/// A truncated series could not reach its tail tolerance within the hard order cap.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// MCMC block stalled with zero acceptance over a full monitoring window.
class AdaptationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or invariant-violating input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace blochwalk
