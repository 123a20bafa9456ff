#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dsgkd {

// Shapes that cannot be combined by an operation.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs that violate a documented precondition (labels, sizes, ratios...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation called on an object in the wrong state (e.g. capture disabled).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file content. `line()` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace dsgkd
