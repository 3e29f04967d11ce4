#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pbq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shape or length disagreement between operands.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Argument outside its documented domain (fractions, bit widths, NaN input).
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Malformed PBTC file. `offset()` is the byte position where parsing failed.
class FormatError : public Error {
public:
  FormatError(const std::string &what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::uint64_t offset_;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Cholesky breakdown; the caller may retry with a larger damping fraction.
class NumericalError : public Error {
public:
  using Error::Error;
};

} // namespace pbq
