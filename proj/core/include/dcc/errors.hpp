#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dcc {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument or array shape does not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input (NTU .skeleton files). Carries the 1-based line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Input is well-formed but disagrees with the configured topology/schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Binary container (SKD1, FBK1, DCC1) is corrupt, truncated or mismatched.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error("byte " + std::to_string(offset) + ": " + what), offset_(offset) {}
  explicit FormatError(const std::string& what) : Error(what), offset_(0) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// A loss or feature became NaN/Inf.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration value or combination of options.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcc
