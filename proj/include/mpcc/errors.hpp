#pragma once

#include <stdexcept>
#include <string>

namespace mpcc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class OverlappingRoundingError : public Error {
 public:
  using Error::Error;
};

class EmptyWindowError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

class NonPositiveDefiniteError : public Error {
 public:
  using Error::Error;
};

class OracleTooLargeError : public Error {
 public:
  using Error::Error;
};

/// Raised for invalid configuration values; `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace mpcc
