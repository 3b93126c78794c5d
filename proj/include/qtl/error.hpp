#pragma once

#include <stdexcept>
#include <string>

namespace qtl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value (qubit count, step size, budget, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Incompatible tensor or vector dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// API misuse: backward without forward, bad label index, ...
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input file.
class DataError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedFileError : public DataError {
 public:
  using DataError::DataError;
};

class CountMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class RaggedRowError : public DataError {
 public:
  using DataError::DataError;
};

class NonNumericFieldError : public DataError {
 public:
  using DataError::DataError;
};

class UnknownHeaderError : public DataError {
 public:
  using DataError::DataError;
};

/// Checkpoint does not match the model it is loaded into.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace qtl
