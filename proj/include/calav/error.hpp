#pragma once

#include <stdexcept>
#include <string>

namespace calav {

/// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// Files that individually parse but do not belong together
/// (checkpoint vs. vocabulary, pair file vs. corpus).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Non-finite losses or non-SPD covariance factorisations.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace calav
