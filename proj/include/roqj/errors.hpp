#pragma once

#include <stdexcept>
#include <string>

namespace roqj {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions disagree (state vs. model, matrix vs. matrix).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An argument violates a documented precondition (bad x triple, asymmetric
/// coupling matrix, unnormalized state, malformed config value, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// dt is too large for the first-order scheme: jump probabilities above the
/// per-step budget or collapse of the no-jump norm.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

/// The rate operator has a negative eigenvalue, so the P-divisible engine
/// cannot be used; the general engine handles this case.
class PDivisibilityError : public Error {
 public:
  using Error::Error;
};

/// A master-equation rate is negative, so MCWF would need negative jump
/// probabilities.
class NegativeRateError : public Error {
 public:
  using Error::Error;
};

/// A reverse-jump channel has no source class in the ensemble.
class UnmatchedChannelError : public Error {
 public:
  using Error::Error;
};

/// Fixed-step integration lost trace beyond tolerance.
class InstabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace roqj
