#ifndef TERRAIN_ERROR_HPP
#define TERRAIN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace terrain {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents: bad magic, version, size or layout.
class FormatError : public Error {
public:
  using Error::Error;
};

/// A payload shorter or longer than its header (or companion file) declares.
class LengthError : public FormatError {
public:
  using FormatError::FormatError;
};

/// Non-finite coordinates or other invalid values found while reading.
class ValidationError : public FormatError {
public:
  using FormatError::FormatError;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Invalid or inconsistent configuration (missing labels, bad dims, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Spatial query against an empty point set.
class QueryError : public Error {
public:
  using Error::Error;
};

/// Loss or metric evaluated outside its domain (e.g. an empty set).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Tensor shapes disagree with a model configuration.
class ShapeError : public FormatError {
public:
  using FormatError::FormatError;
};

/// Non-finite loss or gradient.
class NumericError : public Error {
public:
  using Error::Error;
};

/// A scan that cannot yield a usable training sample. Callers skip it.
class SampleRejected : public Error {
public:
  using Error::Error;
};

} // namespace terrain

#endif // TERRAIN_ERROR_HPP
