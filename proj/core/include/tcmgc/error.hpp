// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tcmgc {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An index or count falls outside its valid range.
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Input has no usable content (fully masked slice, zero-norm vector, empty axis).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// API misuse, such as calling backward on a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or config file syntax.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A value became NaN or infinite.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed archive or checkpoint file.
class FormatError : public Error {
 public:
  enum class Kind { kMagicMismatch, kVersionMismatch, kTruncated, kInconsistent, kIo };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Text and video collections cannot be paired.
class PairingError : public Error {
 public:
  using Error::Error;
};

}  // namespace tcmgc
