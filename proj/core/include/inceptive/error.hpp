#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace inceptive {

// Base of every error the library raises. Subclasses map onto the CLI exit
// codes: ConfigError -> 2, DataError family -> 3, NumericError family -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Batch norm asked to estimate statistics from fewer than two positions.
class DegenerateBatchError : public NumericError {
 public:
  using NumericError::NumericError;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class LabelError : public DataError {
 public:
  using DataError::DataError;
};

class VocabularyError : public DataError {
 public:
  using DataError::DataError;
};

class InputError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// A metric that has no defined value for the given input (e.g. ROC AUC with a
// single class present).
class UndefinedMetricError : public DataError {
 public:
  using DataError::DataError;
};

// Paired test where every difference is zero.
class DegenerateSampleError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::uint64_t byte_offset)
      : DataError(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace inceptive
