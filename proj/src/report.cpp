#include "feinn/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace feinn
{

double loglog_slope(std::span<const double> x, std::span<const double> y)
{
  if (x.size() != y.size() || x.size() < 2)
    throw InvalidInput("loglog_slope: need at least two (x, y) pairs");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    if (!(x[i] > 0) || !(y[i] > 0))
      throw InvalidInput("loglog_slope: values must be positive");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den <= 0)
    throw InvalidInput("loglog_slope: x values are all equal");
  return (n * sxy - sx * sy) / den;
}

double percentile(std::vector<double> v, double p)
{
  if (v.empty())
    throw InvalidInput("percentile: no values");
  if (!(p >= 0 && p <= 1))
    throw InvalidInput("percentile: p must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  if (p == 0)
    return v.front();
  const auto rank = static_cast<std::size_t>(std::ceil(p * v.size() - 1e-12));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

namespace
{

struct Metric
{
  const char *name;
  double StepRecord::*field;
};

constexpr Metric kMetrics[] = {{"feinn_l2", &StepRecord::feinn_l2},
                               {"feinn_h1", &StepRecord::feinn_h1},
                               {"nn_l2", &StepRecord::nn_l2},
                               {"nn_h1", &StepRecord::nn_h1}};

}  // namespace

void write_report(std::ostream &os, std::span<const LabeledHistory> histories)
{
  if (histories.empty())
    throw InvalidInput("write_report: no histories");
  const auto prec = os.precision(6);
  os << std::scientific;
  os << "# error vs dofs\nlabel,step,leaves,dofs,feinn_l2,feinn_h1,nn_l2,nn_h1\n";
  for (const auto &h : histories)
    for (const auto &s : h.history.steps)
      os << h.label << ',' << s.step << ',' << s.leaves << ',' << s.dofs << ',' << s.feinn_l2
         << ',' << s.feinn_h1 << ',' << s.nn_l2 << ',' << s.nn_h1 << '\n';

  os << "\n# log-log slopes vs free dofs (rate = -2 * slope)\nlabel,metric,slope,rate\n";
  for (const auto &h : histories)
  {
    for (const auto &m : kMetrics)
    {
      std::vector<double> x, y;
      for (const auto &s : h.history.steps)
        if (std::isfinite(s.*m.field) && s.*m.field > 0)
        {
          x.push_back(s.dofs);
          y.push_back(s.*m.field);
        }
      const bool distinct = x.size() >= 2 && *std::max_element(x.begin(), x.end()) > *std::min_element(x.begin(), x.end());
      if (!distinct)
        continue;
      const double slope = loglog_slope(x, y);
      os << h.label << ',' << m.name << ',' << slope << ',' << -2.0 * slope << '\n';
    }
  }

  os << "\n# error vs step (reduction factor per step of feinn_h1)\nlabel,step,feinn_h1,factor\n";
  for (const auto &h : histories)
  {
    const auto &st = h.history.steps;
    for (std::size_t i = 0; i < st.size(); ++i)
    {
      os << h.label << ',' << st[i].step << ',' << st[i].feinn_h1 << ',';
      if (i > 0)
        os << st[i - 1].feinn_h1 / st[i].feinn_h1;
      os << '\n';
    }
  }
  os << std::defaultfloat;
  os.precision(prec);
}

void write_seed_aggregate(std::ostream &os, std::span<const AdaptHistory> runs)
{
  if (runs.empty())
    throw InvalidInput("write_seed_aggregate: no runs");
  std::size_t steps = runs.front().steps.size();
  for (const auto &r : runs)
    steps = std::min(steps, r.steps.size());
  const auto prec = os.precision(17);
  os << "step,metric,median,p0,p90,n,dofs_median,leaves_median\n";
  for (std::size_t s = 0; s < steps; ++s)
  {
    std::vector<double> dofs, leaves;
    for (const auto &r : runs)
    {
      dofs.push_back(r.steps[s].dofs);
      leaves.push_back(r.steps[s].leaves);
    }
    for (const auto &m : kMetrics)
    {
      std::vector<double> v;
      for (const auto &r : runs)
        v.push_back(r.steps[s].*m.field);
      os << s << ',' << m.name << ',' << percentile(v, 0.5) << ',' << percentile(v, 0.0) << ','
         << percentile(v, 0.9) << ',' << v.size() << ',' << percentile(dofs, 0.5) << ','
         << percentile(leaves, 0.5) << '\n';
    }
  }
  os.precision(prec);
}

}  // namespace feinn
