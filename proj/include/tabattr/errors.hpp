#pragma once

#include <stdexcept>
#include <string>

namespace tabattr {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between matrices or vectors.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Out-of-domain argument (bounds, counts, fractions).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Normal equations could not be factorized even after ridge regularization.
class SingularError : public Error {
 public:
  using Error::Error;
};

// Malformed cell in an input file; the message names row and column.
class IngestionError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

// Categorical value that has no integer code.
class EncodingError : public Error {
 public:
  using Error::Error;
};

// Empty reference sets, all features dropped, and similar.
class DataError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Operation not supported for the given model architecture.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tabattr
