#pragma once

#include <stdexcept>
#include <string>

namespace comrl {

// Exception hierarchy. The CLI maps each family onto a process exit code.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by the LU solver when a pivot is too small to trust.
class SingularMatrixError : public NumericalError {
 public:
  SingularMatrixError(const std::string& what, double pivot)
      : NumericalError(what), pivot_(pivot) {}
  double pivot() const { return pivot_; }

 private:
  double pivot_;
};

}  // namespace comrl
