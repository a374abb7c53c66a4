#pragma once

#include <stdexcept>
#include <string>

namespace cdpkit {

/// Precondition or shape violation in a library call.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A valid request the implementation deliberately does not handle
/// (e.g. merging a depthwise stage with width multiplier > 1).
class UnsupportedConfiguration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A replacement directive that is well-formed but not allowed on its target.
class DirectiveRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weight tensors that do not match the architecture they are paired with.
class WeightMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Text that fails to parse. Carries a 1-based line/column when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line = 0, int column = 0)
      : std::runtime_error(what), line_(line), column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace cdpkit
