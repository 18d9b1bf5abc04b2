#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace latentlens {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of the operation (time outside
/// [0, T], mismatched dimensions, invalid parameters).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A numeric factorization failed, e.g. a covariance is not SPD.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::ptrdiff_t component)
      : Error(what), component_(component) {}
  std::ptrdiff_t component() const noexcept { return component_; }

 private:
  std::ptrdiff_t component_;
};

/// An ODE/SDE trajectory left the finite region (blow-up guard).
class TrajectoryError : public Error {
 public:
  TrajectoryError(const std::string& what, double last_valid_time)
      : Error(what), last_valid_time_(last_valid_time) {}
  double last_valid_time() const noexcept { return last_valid_time_; }

 private:
  double last_valid_time_;
};

/// Raised by the pool pipeline (balance, stratify, split).
class PoolError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch)
      : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Filtering drew max_draws seeds without a single accept.
class ExhaustionError : public Error {
 public:
  ExhaustionError(const std::string& what, std::size_t draws)
      : Error(what), draws_(draws) {}
  std::size_t draws() const noexcept { return draws_; }

 private:
  std::size_t draws_;
};

}  // namespace latentlens
