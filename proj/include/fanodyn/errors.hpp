// errors.hpp - failure types carried across module boundaries

#pragma once

#include <stdexcept>
#include <string>

namespace fanodyn {

// Quadrature did not reach its error target; carries the final estimate.
struct QuadratureError : std::runtime_error {
    double error_estimate;
    QuadratureError(const std::string& msg, double estimate)
        : std::runtime_error(msg), error_estimate(estimate) {}
};

// Volterra march left the contraction region; a smaller dt is needed.
struct InstabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Truncated Fock space overflowed (top-level population above threshold).
struct CutoffError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A required precondition (missing solve, wrong shape) was violated.
struct PreconditionError : std::logic_error {
    using std::logic_error::logic_error;
};

} // namespace fanodyn
