#pragma once

#include <stdexcept>
#include <string>

namespace padkit {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input (track names, CSV rows).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Data that parsed fine but violates a contract (ranges, id coverage).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Bad numeric parameters handed to an algorithm.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration, detected before any work starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A metric that is undefined for the given input (e.g. no attack samples).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// A phase tried to read labels it is not entitled to.
class AccessDenied : public Error {
 public:
  using Error::Error;
};

}  // namespace padkit
