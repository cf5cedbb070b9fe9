#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace apg {

/// Base class for every error raised by the workbench libraries.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model/input shapes do not fit together.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller passed an argument outside an operation's domain.
class ArgumentError : public Error {
 public:
  ArgumentError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A NaN or infinity showed up inside a network pass.
class NumericalError : public Error {
 public:
  NumericalError(std::size_t layer, const std::string& message)
      : Error("layer " + std::to_string(layer) + ": " + message), layer_(layer) {}

  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

/// Malformed IDX or model file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Dataset content does not satisfy a precondition (e.g. a class is missing).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training loss became non-finite.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace apg
