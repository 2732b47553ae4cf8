#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pqm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a type invariant. `field()` names the offending field.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// A file could not be parsed. `line()` is 1-based, 0 when not line-oriented;
/// `byte_offset()` is set for whole-document formats.
class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, std::size_t byte_offset,
             const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string()) +
              (byte_offset ? " (byte " + std::to_string(byte_offset) + ")" : std::string()) +
              ": " + what),
        line_(line),
        byte_offset_(byte_offset) {}
  std::size_t line() const { return line_; }
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t line_;
  std::size_t byte_offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration. Mapped to exit status 2 by the CLI.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A precondition of a theorem or check is not met (e.g. the ranking theorem
/// applied outside its regime).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace pqm
