#pragma once

#include <stdexcept>
#include <string>

namespace evodiff {

// Input outside a schedule/grid/solver domain (bad time, bad ratio, ...).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Floating-point trouble that should not happen with valid inputs
// (non-finite state, non-PSD covariance, total responsibility underflow).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// The direction vector of a closed-form least-squares solution is ~0.
class DegenerateDirection : public std::runtime_error {
 public:
  explicit DegenerateDirection(const std::string& what) : std::runtime_error(what) {}
};

// Config text could not be parsed; carries a 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Config parsed but failed validation; carries the offending field.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string field, const std::string& why)
      : std::runtime_error(field + ": " + why), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace evodiff
