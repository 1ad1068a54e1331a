#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mancap {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a documented invariant (bad tensor, bad config, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed EMBX container: magic, version or header JSON.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Stream ended before the declared payload size.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value in an embedding payload.
class DataError : public Error {
 public:
  DataError(const std::string& what, std::uint64_t flat_index)
      : Error(what), flat_index_(flat_index) {}
  std::uint64_t flat_index() const noexcept { return flat_index_; }

 private:
  std::uint64_t flat_index_;
};

/// Dataset record does not cover the requested label schemes.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class KeyError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// Too few points (or coincident points) for the requested measure.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Fewer principal axes available than requested.
class RankError : public Error {
 public:
  using Error::Error;
};

/// Separability solver failed to converge or produced an unverifiable answer.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// A condition row has no matching baseline row.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Filesystem / stream failure outside the format itself.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mancap
