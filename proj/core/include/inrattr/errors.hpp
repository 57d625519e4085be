#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace inrattr {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A forward operation produced a non-finite value, or was fed one where
/// finiteness is a precondition (softmax logits, vecsort input).
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the tape (backward twice, backward on foreign tensor).
class TapeError : public Error {
 public:
  using Error::Error;
};

/// Training aborted on a non-finite loss. Carries the epoch at which the
/// divergence was detected and, for iterative explanation runs, the
/// iteration index (-1 when not applicable).
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, const std::string& what, int iteration = -1)
      : Error(what), epoch_(epoch), iteration_(iteration) {}

  std::size_t epoch() const { return epoch_; }
  int iteration() const { return iteration_; }

 private:
  std::size_t epoch_;
  int iteration_;
};

/// File/stream level I/O failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Weight container did not start with the expected magic bytes.
class BadMagicError : public IoError {
 public:
  using IoError::IoError;
};

/// Weight container has an unsupported format version.
class VersionMismatchError : public IoError {
 public:
  using IoError::IoError;
};

/// Weight container ended before the declared payload was complete.
class TruncatedPayloadError : public IoError {
 public:
  using IoError::IoError;
};

/// Invalid configuration (unknown key, bad value, schema violation).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace inrattr
