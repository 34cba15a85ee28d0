#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ionfit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameter vector length does not match the model.
class ArityError : public Error {
 public:
  using Error::Error;
};

/// Steady state is not unique (nullspace dimension != 1).
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// A computed quantity left its admissible range (e.g. negative occupancy).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Unknown builtin model or protocol name.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Time or index outside the valid range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Malformed model, protocol, trace or configuration input.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Traces or bands that were expected to share a time grid do not.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// A cross-validation input is missing a required dataset.
class CompletenessError : public Error {
 public:
  using Error::Error;
};

/// Rejection sampling of initial guesses exhausted its attempt budget.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// Every optimiser start failed.
class FitError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure, always carrying the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Adaptive integration could not meet the tolerance (step-size underflow).
class StiffnessError : public Error {
 public:
  StiffnessError(std::size_t segment, const std::string& what)
      : Error(what), segment_(segment) {}

  std::size_t segment() const noexcept { return segment_; }

 private:
  std::size_t segment_;
};

}  // namespace ionfit
