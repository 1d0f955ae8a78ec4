#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cogscreen {

// Base for every error raised by the library. Callers that only need a
// message can catch this; the subclasses exist so the CLI and the HTTP
// layer can map failures onto exit codes and status codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line and the offending field.
class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, std::string field,
             const std::string& what);

  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::string source_;
  std::size_t line_;
  std::string field_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data that violates a precondition (single-class labels, NaNs, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

}  // namespace cogscreen
