#pragma once

#include <stdexcept>
#include <string>

namespace ecgkit {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidInputError : Error {
  using Error::Error;
};
struct InvalidFilterError : Error {
  using Error::Error;
};
struct InvalidConfigError : Error {
  using Error::Error;
};
struct EmptyTraceError : Error {
  using Error::Error;
};
struct WiringError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct InvalidDatasetError : Error {
  using Error::Error;
};
struct DegenerateProfileError : Error {
  using Error::Error;
};
struct NormalizationError : Error {
  using Error::Error;
};
struct InsufficientSampleError : Error {
  using Error::Error;
};
struct UndefinedCorrelationError : Error {
  using Error::Error;
};
struct GridMismatchError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace ecgkit
