#pragma once

#include <stdexcept>
#include <string>

namespace privkit {

// Base class for all privkit failures.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violated precondition or malformed argument (shape mismatch, bad spec, ...).
struct ContractError : Error {
  using Error::Error;
};

// Numerical breakdown: non-finite values, failed factorization, diverged run.
struct NumericError : Error {
  using Error::Error;
};

// File, parse and schema problems.
struct IoError : Error {
  using Error::Error;
};

}  // namespace privkit
