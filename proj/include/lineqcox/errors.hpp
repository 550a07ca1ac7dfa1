#pragma once

#include <stdexcept>
#include <string>

namespace lineqcox {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter lies outside its admissible range (non-positive variance, m < 2, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix sizes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A location lies outside the domain of the grid or intensity.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The dominating rate used for thinning was exceeded by the intensity.
class DominatingBoundError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

/// Malformed input file; the message carries the offending line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// An operation was called on an object in an unusable state (e.g. an empty chain).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Factorisation failure or loss of numerical accuracy.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The HMC particle exceeded its bounce budget.
class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Reference values carry no variance so Q² is undefined.
class DegenerateReferenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Hyperparameter search found no candidate with finite objective.
class EstimationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Constraints admit no strictly feasible point, or a start point violates them.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace lineqcox
