#pragma once

#include <stdexcept>
#include <string>

namespace rwlab {

// Base class for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

struct DescriptorMismatch : Error {
  using Error::Error;
  const char* kind() const noexcept override { return "descriptor-mismatch"; }
};

struct ParseError : Error {
  using Error::Error;
  const char* kind() const noexcept override { return "parse-error"; }
};

struct ValidationError : Error {
  using Error::Error;
  const char* kind() const noexcept override { return "validation-error"; }
};

struct DomainError : Error {
  using Error::Error;
  const char* kind() const noexcept override { return "domain-error"; }
};

// Enumeration or support size exceeded a configured budget.
struct ResourceError : Error {
  long completed = -1;  // largest fully completed radius/step, -1 if unknown
  ResourceError(const std::string& msg, long done = -1) : Error(msg), completed(done) {}
  const char* kind() const noexcept override { return "resource-error"; }
};

// Iterative or quadrature method did not converge.
struct NumericError : Error {
  double last_value = 0.0;
  double residual = 0.0;
  NumericError(const std::string& msg, double value = 0.0, double res = 0.0)
      : Error(msg), last_value(value), residual(res) {}
  const char* kind() const noexcept override { return "numeric-error"; }
};

struct FitRefused : Error {
  using Error::Error;
  const char* kind() const noexcept override { return "fit-refused"; }
};

}  // namespace rwlab
