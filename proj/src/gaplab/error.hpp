#pragma once

#include <stdexcept>
#include <string>

namespace gaplab {

enum class ErrorKind {
  InvalidArgument,
  Config,
  Domain,
  Invariant,
  Numerical,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when a point falls outside the domain of a profile, chart or region.
struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorKind::Domain, what) {}
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::InvalidArgument, what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

// A parameter set violates a stated admissibility bound.
struct InvariantError : Error {
  explicit InvariantError(const std::string& what) : Error(ErrorKind::Invariant, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace gaplab
