#pragma once

#include <stdexcept>
#include <string>

namespace esd {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (JSON, config, checkpoint bytes).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that breaks a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A precondition on an argument does not hold.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

}  // namespace esd
