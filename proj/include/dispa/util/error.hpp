#pragma once

#include <stdexcept>
#include <string>

namespace dispa {

// Root of every error thrown by the library. Commands map it to a nonzero exit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input file content.
class DataError : public Error {
 public:
  using Error::Error;
};

// Shape or configuration mismatch between components.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace dispa
