#pragma once

#include <stdexcept>
#include <string>

namespace rdctl {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad lengths, mode counts, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Negative fractional power requested on a zero eigenvalue.
class SingularOperatorError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of definition (point outside [0, L], t outside [0, T]).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IllConditionedKernelError : public NumericError {
 public:
  IllConditionedKernelError(const std::string& what, double separation)
      : NumericError(what), separation_(separation) {}
  double separation() const { return separation_; }

 private:
  double separation_;
};

class UnsupportedPolicyError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace rdctl
