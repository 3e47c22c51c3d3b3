// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mpq {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, divergence, or an ill-conditioned factor.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public NumericError {
 public:
  using NumericError::NumericError;
};

class TrainingError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Invalid argument that is not a shape problem (bad bit-width, empty input, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed checkpoint; subclasses identify the corruption class.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class MagicMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class CodeRangeError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace mpq
