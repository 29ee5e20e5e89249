#pragma once

#include <stdexcept>
#include <string>

namespace gean {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file header or record is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A well-formed file of a kind we do not read (e.g. colour PPM).
class UnsupportedFormatError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// The file ended before all declared data was read.
class TruncatedDataError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Sizes or dimensions of the arguments disagree, or are out of range.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A numerical problem has no well-defined answer (singular system,
/// zero-mass heatmap, zero normalizer, ...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or unknown name.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gean
