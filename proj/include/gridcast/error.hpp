// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gridcast {

// Every error the library raises derives from Error; the CLI maps the
// concrete type onto an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or extent mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A hyperparameter or configuration value out of range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// An operation called in the wrong order, e.g. backward before forward.
class StateError : public Error {
 public:
  using Error::Error;
};

// Empty, too-short or otherwise unusable data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Input columns do not match the expected schema.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Problem too large for the exact algorithm.
class SizeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gridcast
