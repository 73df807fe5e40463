#pragma once

// Second-order forward-mode scalar in two variables. Used to derive source
// terms f = -(u_xx + u_yy) from closed-form solutions.

#include <cmath>

namespace feinn
{

struct Jet
{
  double v = 0, dx = 0, dy = 0, dxx = 0, dxy = 0, dyy = 0;

  Jet() = default;
  Jet(double c) : v(c) {}
  Jet(double v_, double dx_, double dy_, double dxx_, double dxy_, double dyy_)
      : v(v_), dx(dx_), dy(dy_), dxx(dxx_), dxy(dxy_), dyy(dyy_)
  {
  }

  static Jet x(double value) { return {value, 1, 0, 0, 0, 0}; }
  static Jet y(double value) { return {value, 0, 1, 0, 0, 0}; }

  double laplacian() const { return dxx + dyy; }
};

/// Applies a scalar function given its value and first two derivatives at a.v.
inline Jet chain(const Jet &a, double f0, double f1, double f2)
{
  return {f0,
          f1 * a.dx,
          f1 * a.dy,
          f2 * a.dx * a.dx + f1 * a.dxx,
          f2 * a.dx * a.dy + f1 * a.dxy,
          f2 * a.dy * a.dy + f1 * a.dyy};
}

inline Jet operator+(const Jet &a, const Jet &b)
{
  return {a.v + b.v, a.dx + b.dx, a.dy + b.dy, a.dxx + b.dxx, a.dxy + b.dxy, a.dyy + b.dyy};
}
inline Jet operator-(const Jet &a, const Jet &b)
{
  return {a.v - b.v, a.dx - b.dx, a.dy - b.dy, a.dxx - b.dxx, a.dxy - b.dxy, a.dyy - b.dyy};
}
inline Jet operator-(const Jet &a)
{
  return {-a.v, -a.dx, -a.dy, -a.dxx, -a.dxy, -a.dyy};
}
inline Jet operator*(const Jet &a, const Jet &b)
{
  return {a.v * b.v,
          a.dx * b.v + a.v * b.dx,
          a.dy * b.v + a.v * b.dy,
          a.dxx * b.v + 2 * a.dx * b.dx + a.v * b.dxx,
          a.dxy * b.v + a.dx * b.dy + a.dy * b.dx + a.v * b.dxy,
          a.dyy * b.v + 2 * a.dy * b.dy + a.v * b.dyy};
}
inline Jet reciprocal(const Jet &a)
{
  const double r = 1.0 / a.v;
  return chain(a, r, -r * r, 2 * r * r * r);
}
inline Jet operator/(const Jet &a, const Jet &b)
{
  return a * reciprocal(b);
}

inline Jet sqrt(const Jet &a)
{
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}
inline Jet pow(const Jet &a, double p)
{
  const double f0 = std::pow(a.v, p);
  return chain(a, f0, p * std::pow(a.v, p - 1), p * (p - 1) * std::pow(a.v, p - 2));
}
inline Jet exp(const Jet &a)
{
  const double e = std::exp(a.v);
  return chain(a, e, e, e);
}
inline Jet log(const Jet &a)
{
  return chain(a, std::log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v));
}
inline Jet sin(const Jet &a)
{
  const double s = std::sin(a.v), c = std::cos(a.v);
  return chain(a, s, c, -s);
}
inline Jet cos(const Jet &a)
{
  const double s = std::sin(a.v), c = std::cos(a.v);
  return chain(a, c, -s, -c);
}
inline Jet tanh(const Jet &a)
{
  const double t = std::tanh(a.v);
  const double d = 1 - t * t;
  return chain(a, t, d, -2 * t * d);
}
inline Jet atan(const Jet &a)
{
  const double d = 1.0 / (1.0 + a.v * a.v);
  return chain(a, std::atan(a.v), d, -2 * a.v * d * d);
}

/// atan2 from dtheta = (x dy - y dx) / (x^2 + y^2), differentiated once more.
inline Jet atan2(const Jet &y, const Jet &x)
{
  const double r2 = x.v * x.v + y.v * y.v;
  const double r2x = 2 * (x.v * x.dx + y.v * y.dx);
  const double r2y = 2 * (x.v * x.dy + y.v * y.dy);
  const double nx = x.v * y.dx - y.v * x.dx;
  const double ny = x.v * y.dy - y.v * x.dy;
  // Derivatives of the numerators.
  const double nxx = x.dx * y.dx + x.v * y.dxx - y.dx * x.dx - y.v * x.dxx;
  const double nxy = x.dy * y.dx + x.v * y.dxy - y.dy * x.dx - y.v * x.dxy;
  const double nyy = x.dy * y.dy + x.v * y.dyy - y.dy * x.dy - y.v * x.dyy;
  return {std::atan2(y.v, x.v),
          nx / r2,
          ny / r2,
          (nxx * r2 - nx * r2x) / (r2 * r2),
          (nxy * r2 - nx * r2y) / (r2 * r2),
          (nyy * r2 - ny * r2y) / (r2 * r2)};
}

}  // namespace feinn
