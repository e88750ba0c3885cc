#pragma once

#include <stdexcept>
#include <string>

namespace freqsr {

// Every error thrown by the library derives from Error so the CLI can map
// categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
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

class FormatError : public Error {
 public:
  using Error::Error;
};

// Checkpoint written by an incompatible format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace freqsr
