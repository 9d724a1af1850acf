#pragma once

#include <stdexcept>
#include <string>

namespace narrator {

/// Base of every exception thrown by this project.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration file could not be parsed or failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied value violated a precondition (bad choice, bad k, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operation not allowed in the current state (e.g. finish on a Created session).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Another operation is already in flight on the same session.
class BusyError : public StateError {
 public:
  using StateError::StateError;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Credential missing or rejected. Never retried.
class AuthError : public Error {
 public:
  using Error::Error;
};

/// Network failure, timeout or retryable HTTP status after the retry budget.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// Provider answered with something unusable (non-retryable HTTP error, bad body).
class ProviderError : public Error {
 public:
  using Error::Error;
};

class StorageError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (lexicon, sheet, gazetteer, ...). Carries a line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0) : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Mathematical domain violation (zero-norm vector, degenerate variance).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace narrator
