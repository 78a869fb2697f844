#pragma once

#include <stdexcept>
#include <string>

namespace pldirac {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched dimensions, unrepresentable vectors, malformed structure data.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Bad user input: unknown names, schema violations, singular pairings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside its domain (off-fiber point, wrong support, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, singular operators met during a computation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class FactorizationError : public NumericalError {
 public:
  FactorizationError(const std::string& what, double residual)
      : NumericalError(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace pldirac
