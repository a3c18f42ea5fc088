#pragma once

#include <stdexcept>
#include <string>

namespace trustkit {

// All toolkit failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or layer dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Gradient requested through a node that is not on the tape.
class TapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, singular systems, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Problem size beyond what an exact method supports.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Experiment configuration rejected by the schema or a parameter check.
class ConfigError : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace trustkit
