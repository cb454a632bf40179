#pragma once

#include <stdexcept>

namespace suparc {

// Error taxonomy. The CLI maps DataError/ConfigError onto exit code 1 and
// NumericError onto exit code 2; everything else indicates a programming bug.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatch between tensors.
struct DimensionError : Error {
  using Error::Error;
};

// API precondition violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Bad input file, sample, or checkpoint.
struct DataError : Error {
  using Error::Error;
};

// Invalid configuration value.
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite loss or failed gradient check.
struct NumericError : Error {
  using Error::Error;
};

// Input outside the numeric domain, e.g. a zero-norm vector.
struct DegenerateInputError : Error {
  using Error::Error;
};

// No anchor in the batch has an in-batch positive; callers skip the batch.
struct EmptyPositiveError : Error {
  using Error::Error;
};

}  // namespace suparc
