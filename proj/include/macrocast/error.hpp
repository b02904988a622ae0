#pragma once

#include <stdexcept>
#include <string>

namespace macrocast {

// Base class for every error raised by the engine. The CLI maps ConfigError
// to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input: bad config keys, out-of-range hyperparameters,
// malformed command arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent data (CSV rows, panels, record sets).
class DataError : public Error {
 public:
  using Error::Error;
};

// A numerical procedure could not produce a result (rank deficiency,
// non-convergence, degenerate regressors).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Persisted run contents do not match their manifest.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace macrocast
