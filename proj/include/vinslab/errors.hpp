#pragma once

#include <stdexcept>
#include <string>

namespace vinslab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ArchitectureError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

// Malformed text input; the message names the offending line.
struct ParseError : Error {
  ParseError(const std::string& what, long line)
      : Error("line " + std::to_string(line) + ": " + what), line_number(line) {}
  long line_number;
};

struct SchemaError : Error {
  using Error::Error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

struct CollectionError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DependencyError : Error {
  using Error::Error;
};

}  // namespace vinslab
