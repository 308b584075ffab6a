#pragma once

#include <stdexcept>
#include <string>

namespace turbohoi {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not conform to a primitive's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or input data (maps to CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or version-mismatched file contents (maps to CLI exit code 2).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Stored state that does not fit the running model (maps to CLI exit code 3).
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace turbohoi
