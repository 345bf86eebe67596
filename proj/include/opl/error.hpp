#pragma once

#include <stdexcept>
#include <string>

namespace opl {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Value outside its permitted domain (class index, budget, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Tensor or map dimensions that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or option combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (open, read, write).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace opl
