#pragma once

#include <stdexcept>
#include <string>

namespace fedseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents or vector lengths do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is out of its legal range. `key()` names the field.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(key + ": " + message), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// An API was called out of protocol (e.g. backward on a detached tensor).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed or does not match what the caller expects.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedseg
