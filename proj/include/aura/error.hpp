#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aura {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration or parameter value is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A contract on the caller was violated (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Not enough data to perform the operation.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Missing key in a lookup table.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// On-disk artifact is malformed or does not match what the caller expects.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or an undefined numeric operation (zero-vector normalize).
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, int layer = -1)
      : Error(what), layer_(layer) {}
  /// Index of the encoder layer that produced the failure, -1 when unknown.
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

/// Training diverged; carries the location of the failing step.
class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, std::size_t epoch, std::size_t batch)
      : NumericError(what + " (epoch " + std::to_string(epoch) + ", batch " +
                     std::to_string(batch) + ")"),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace aura
