#pragma once

#include <stdexcept>
#include <string>

namespace cslm {

// Error categories raised across the toolkit. The CLI catches all of them at
// the top level, prints a one-line diagnostic and exits nonzero.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
struct DimError : Error {
  using Error::Error;
};

// Bad configuration value or inconsistent model setup.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input data (corpus, TSV, embedding file, token ids).
struct DataError : Error {
  using Error::Error;
};

// Operation called in the wrong state (e.g. backward without a cached forward).
struct StateError : Error {
  using Error::Error;
};

// File could not be read or written.
struct IoError : Error {
  using Error::Error;
};

// Non-finite value produced where a finite one is required.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace cslm
