#pragma once

#include <stdexcept>
#include <string>

namespace xcbam {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid shapes, widths or hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API used in a way its contract forbids (e.g. backward on a detached tensor).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-range external data (files, label maps).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Broken internal invariant.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace xcbam
