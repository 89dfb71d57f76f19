#pragma once

#include <stdexcept>
#include <string>

namespace lfndf {

// Base class for recoverable failures reported to the CLI as "data" errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unsupported file contents (PFM headers, manifests, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Reconstruction produced a non-finite loss, gradient or parameter.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace lfndf
