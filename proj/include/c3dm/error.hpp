#pragma once

#include <stdexcept>
#include <string>

namespace c3dm {

// Error taxonomy shared across modules. The CLI maps these to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DivergenceError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Malformed binary payloads; carries the byte offset of the first bad field.
struct FormatError : Error {
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (offset " + std::to_string(offset) + ")"), offset(offset) {}
  std::size_t offset;
};

}  // namespace c3dm
