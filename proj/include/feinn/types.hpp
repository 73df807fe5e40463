#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace feinn
{

using Point = Eigen::Vector2d;
using Vector = Eigen::VectorXd;

using ScalarField = std::function<double(const Point &)>;
using VectorField = std::function<Point(const Point &)>;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Raised when an input violates a documented precondition.
class InvalidInput : public Error
{
public:
  using Error::Error;
};

/// Raised when an internal invariant does not hold.
class InvariantViolation : public Error
{
public:
  using Error::Error;
};

}  // namespace feinn
