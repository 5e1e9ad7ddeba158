#pragma once

#include <stdexcept>
#include <string>

namespace mlatmi {

// Base of all library errors. The CLI maps each subclass to an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, schema violation or bad argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Singular geometry, divergence and other numeric failures.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Singular or near-singular Fisher information / rank-deficient design.
class SingularGeometryError : public NumericError {
 public:
  using NumericError::NumericError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mlatmi
