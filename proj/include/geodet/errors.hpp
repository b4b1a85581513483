#pragma once

#include <stdexcept>
#include <string>

namespace geodet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NonPositiveDepth : public Error {
 public:
  using Error::Error;
};

class EmptySampleSet : public Error {
 public:
  using Error::Error;
};

class ZeroVector : public Error {
 public:
  using Error::Error;
};

class DegenerateRotation : public Error {
 public:
  using Error::Error;
};

class DegenerateUnion : public Error {
 public:
  using Error::Error;
};

class NonDifferentiablePoint : public Error {
 public:
  using Error::Error;
};

class PlacementFailure : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `where` names the offending field or position.
class ParseError : public Error {
 public:
  ParseError(const std::string& where, const std::string& what)
      : Error(where.empty() ? what : where + ": " + what), where_(where) {}

  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

/// Well-formed input whose values violate the schema's invariants.
class SchemaError : public ParseError {
 public:
  using ParseError::ParseError;
};

class VersionMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace geodet
