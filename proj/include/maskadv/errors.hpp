#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace maskadv {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed something that violates an operation's precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

// A NaN/Inf appeared, or a computation degenerated (e.g. a flat region).
class NumericError : public Error {
 public:
  using Error::Error;
};

// The boundary subproblem has no meaningful solution.
class SolverError : public Error {
 public:
  using Error::Error;
};

// Malformed JSON text (truncated file, syntax error).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed JSON that does not describe a valid model or tensor.
class LoadError : public Error {
 public:
  enum class Kind { missing_field, unsupported_layer, shape_mismatch, bad_value };

  LoadError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Dataset file could not be decoded; offset is the byte position of the problem.
class IngestError : public Error {
 public:
  IngestError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace maskadv
