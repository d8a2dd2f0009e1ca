#pragma once

#include <stdexcept>
#include <string>

namespace qdyn {

// Base of everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (device files, configs, CSV datasets).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Input parsed but violates a model invariant; message carries the field path.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Numerical failure: non-convergence, singular systems, bond ceilings.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace qdyn
