#pragma once

#include <stdexcept>
#include <string>

namespace cofi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or axis mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters, layer geometry or CLI/config values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Optimizer or tape used in an invalid state (e.g. missing gradient).
class StateError : public Error {
 public:
  using Error::Error;
};

// Argument outside its documented value range.
class ValueError : public Error {
 public:
  using Error::Error;
};

}  // namespace cofi
