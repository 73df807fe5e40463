#pragma once

#include <vector>

#include "feinn/types.hpp"

namespace feinn
{

/// Gauss-Legendre rule with q points on [0, 1].
struct GaussRule1d
{
  std::vector<double> x;
  std::vector<double> w;
};

GaussRule1d gauss_legendre(int q);

/// Tensor-product Gauss rule on the reference square [0, 1]^2.
struct QuadRule
{
  std::vector<Point> points;
  std::vector<double> weights;
};

QuadRule tensor_gauss(int q);

/// Rule on [0,1]^2 made of a tensor rule of q points on each of s x s subcells.
QuadRule subdivided_gauss(int q, int s);

}  // namespace feinn
