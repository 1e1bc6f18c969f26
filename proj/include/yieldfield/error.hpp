#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace yieldfield {

// Error categories mirror the failure classes the pipeline reports; the CLI
// maps usage-type errors to exit code 2 and numerical ones to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class LocationError : public Error {
 public:
  LocationError(const std::string& what, std::size_t index)
      : Error(what + " (point " + std::to_string(index) + ")"), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, long pivot = -1)
      : Error(pivot >= 0 ? what + " (pivot " + std::to_string(pivot) + ")" : what),
        pivot_(pivot) {}
  long pivot() const { return pivot_; }

 private:
  long pivot_;
};

class ApproximationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Non-fatal conditions (conditioning, fallbacks) go through one sink; the
// default writes to stderr.
using WarningHandler = std::function<void(const std::string&)>;
void set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace yieldfield
