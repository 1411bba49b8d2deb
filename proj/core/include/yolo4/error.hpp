#pragma once

#include <stdexcept>
#include <string>

namespace yolo4 {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor extent did not satisfy an operation's precondition.
class DimensionError : public Error {
 public:
  DimensionError(std::string axis, const std::string& message)
      : Error(axis + ": " + message), axis_(std::move(axis)) {}

  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

/// Model config text rejected; line() is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& message)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Weights blob does not fit the model graph.
class WeightsError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Image decode/encode failure.
class ImageError : public Error {
 public:
  enum class Kind { unsupported_format, corrupt_header, io };

  ImageError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace yolo4
