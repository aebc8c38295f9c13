#pragma once

#include <stdexcept>
#include <string>

namespace hlab {

/// Base of every error raised by the library. The CLI maps subclasses onto
/// exit codes (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration (syntax, unknown key, bad value).
class ConfigError : public Error {
 public:
  ConfigError(const std::string& msg, int line = 0, int column = 0)
      : Error(line > 0 ? msg + " (line " + std::to_string(line) + ", column " +
                             std::to_string(column) + ")"
                       : msg),
        line_(line),
        column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Evaluation at a singular point (r = 0 for an r-dependent expression, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A numerical failure: NaN/Inf evaluation, non-convergence, breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Requested evaluation outside the covered range (eikonal shells, shells).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Violated operation precondition (epsilon = 0, inconsistent (u, f), ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A hypothesis that the caller asked to be enforced does not hold.
class HypothesisViolation : public Error {
 public:
  using Error::Error;
};

/// Memory budget exceeded.
class ResourceError : public Error {
 public:
  using Error::Error;
};

}  // namespace hlab
