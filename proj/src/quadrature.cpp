#include "feinn/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace feinn
{

namespace
{

GaussRule1d compute_gauss(int q)
{
  // Newton iteration on P_q starting from the Chebyshev-like guess.
  GaussRule1d r;
  r.x.resize(q);
  r.w.resize(q);
  for (int i = 0; i < q; ++i)
  {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (q + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it)
    {
      double p0 = 1.0, p1 = z;
      for (int j = 2; j <= q; ++j)
      {
        const double p2 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = q * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16)
        break;
    }
    // Map [-1,1] -> [0,1]; nodes come out in decreasing order, so mirror the index.
    r.x[q - 1 - i] = 0.5 * (z + 1.0);
    r.w[q - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  return r;
}

}  // namespace

GaussRule1d gauss_legendre(int q)
{
  if (q < 1)
    throw InvalidInput("gauss_legendre: need at least one point");
  static std::mutex mu;
  static std::map<int, GaussRule1d> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(q);
  if (it == cache.end())
    it = cache.emplace(q, compute_gauss(q)).first;
  return it->second;
}

QuadRule tensor_gauss(int q)
{
  return subdivided_gauss(q, 1);
}

QuadRule subdivided_gauss(int q, int s)
{
  if (s < 1)
    throw InvalidInput("subdivided_gauss: need at least one subcell");
  const GaussRule1d g = gauss_legendre(q);
  QuadRule r;
  r.points.reserve(q * q * s * s);
  r.weights.reserve(q * q * s * s);
  const double h = 1.0 / s;
  for (int jy = 0; jy < s; ++jy)
    for (int jx = 0; jx < s; ++jx)
      for (int b = 0; b < q; ++b)
        for (int a = 0; a < q; ++a)
        {
          r.points.emplace_back((jx + g.x[a]) * h, (jy + g.x[b]) * h);
          r.weights.push_back(g.w[a] * g.w[b] * h * h);
        }
  return r;
}

}  // namespace feinn
