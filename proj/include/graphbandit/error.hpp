#pragma once

#include <stdexcept>
#include <string>

namespace graphbandit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input contracts.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};
class DimensionMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};
class LengthMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};
class ShrinkNotAllowed : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};
class TooManyNodes : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};
class NotUnitNorm : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};
class DomainError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};
class IndexOutOfRange : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};
class EmptyPlausibleSet : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class ZeroAggregateNorm : public Error {
 public:
  explicit ZeroAggregateNorm(int node)
      : Error("zero aggregate norm at node " + std::to_string(node)), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

// Numerical failures.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};
class CholeskyFailure : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};
class SingularDesign : public CholeskyFailure {
 public:
  using CholeskyFailure::CholeskyFailure;
};
class NonFiniteLoss : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace graphbandit
