#pragma once

#include <stdexcept>
#include <string>

namespace tsrag {

/// Base of every error the library raises. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, missing or inconsistent data (exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

/// External model backend failure (exit code 3).
class BackendError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsrag
