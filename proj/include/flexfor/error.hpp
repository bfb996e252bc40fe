#pragma once

#include <stdexcept>
#include <string>

namespace flexfor {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dangling references or otherwise malformed network structure.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Text input could not be parsed. `where()` holds a field path or row index.
class ParseError : public Error {
 public:
  ParseError(const std::string& where, const std::string& what)
      : Error(where.empty() ? what : where + ": " + what), where_(where) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Parsed input violates a semantic invariant (e.g. non-empty PCC bus).
class SemanticError : public Error {
 public:
  using Error::Error;
};

/// The input uses a feature outside the supported subset.
class UnsupportedFeature : public Error {
 public:
  using Error::Error;
};

/// Least-squares fitting failed on degenerate data.
class FitError : public Error {
 public:
  using Error::Error;
};

/// Sampling could not reach its target within the attempt budget.
class SamplingError : public Error {
 public:
  using Error::Error;
};

}  // namespace flexfor
