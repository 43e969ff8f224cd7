#pragma once

#include <stdexcept>
#include <string>

namespace printchain {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A type invariant or operation precondition was violated by the caller.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Malformed input data (STL, PLY, CSV, config text).
class ParseError : public Error {
public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
  using Error::Error;
};

/// Geometry is valid but not something the requested operation supports
/// (open mesh for slicing, multi-contour layer for helical mode, ...).
class GeometryError : public Error {
public:
  using Error::Error;
};

/// Mathematical domain violation (friction angle at or above 90 degrees, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

} // namespace printchain
