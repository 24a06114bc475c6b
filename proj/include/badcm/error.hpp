#pragma once

#include <stdexcept>
#include <string>

namespace badcm {

/// Failure categories. The CLI maps each to a process exit code.
enum class ErrorKind { Validation, Parse, Io, Backend, Numeric, Unpoisonable };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what) : Error(ErrorKind::Backend, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

/// Raised when a text has no eligible keywords and cannot carry a textual trigger.
class UnpoisonableError : public Error {
 public:
  explicit UnpoisonableError(const std::string& what) : Error(ErrorKind::Unpoisonable, what) {}
};

}  // namespace badcm
