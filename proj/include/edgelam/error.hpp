#pragma once

#include <stdexcept>
#include <string>

namespace edgelam {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the domain of the function (negative bandwidth, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Requested adapter rank is not reachable by the operation.
class RankError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

/// Problem instance exceeds the size an exact method is allowed to enumerate.
class SizeError : public Error {
 public:
  using Error::Error;
};

class SchedulingError : public Error {
 public:
  using Error::Error;
};

/// A placement violates the one-device-per-step or capacity constraints.
class ConstraintError : public Error {
 public:
  using Error::Error;
};

/// Raised by round loops when a sub-operation reports no feasible solution.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace edgelam
