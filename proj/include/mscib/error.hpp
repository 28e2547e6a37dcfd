#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mscib {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or incomplete configuration. Maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument to an operation (bad sizes, out-of-range values).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Dataset problems. Subclasses distinguish the loader failure modes.
class DataError : public Error {
 public:
  using Error::Error;
};

class MissingFileError : public DataError {
 public:
  using DataError::DataError;
};

class RowMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class NonNumericError : public DataError {
 public:
  using DataError::DataError;
};

/// A non-finite value appeared in a named loss term or intermediate.
class NumericError : public Error {
 public:
  NumericError(std::string term, const std::string& detail)
      : Error("non-finite value in '" + term + "': " + detail), term_(std::move(term)) {}

  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

/// Corrupt or truncated checkpoint file.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace mscib
