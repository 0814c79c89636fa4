#pragma once

#include <stdexcept>
#include <string>

namespace bayescomplex {

/// Argument outside the domain of a function (evaluation point, measure
/// domain mismatch, parameter range).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// An operation's documented precondition does not hold.
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A Monte Carlo stage recorded too few hits to produce the requested quantity.
class InsufficientSamplesError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Divergence, non positive-definite systems and similar numerical failures.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An assumption of a theorem-level procedure failed at run time
/// (e.g. a bisection bracket that does not bracket).
class AssumptionViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace bayescomplex
