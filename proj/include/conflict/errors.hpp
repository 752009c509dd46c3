#pragma once

#include <stdexcept>
#include <string>

namespace conflict {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or option.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a precondition (bad token id, empty sequence, single class...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace conflict
