#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "feinn/adapt.hpp"

namespace feinn
{

/// Least-squares slope of log(y) against log(x). Needs two distinct positive x values.
double loglog_slope(std::span<const double> x, std::span<const double> y);

/// Nearest-rank percentile: the ceil(p n)-th smallest value, the minimum for p = 0.
double percentile(std::vector<double> values, double p);

struct LabeledHistory
{
  std::string label;
  AdaptHistory history;
};

/// Error-vs-dofs and error-vs-step tables followed by log-log slopes
/// (error vs free dofs) and rates -2 * slope.
void write_report(std::ostream &os, std::span<const LabeledHistory> histories);

/// Long-format aggregate over seeds:
/// `step,metric,median,p0,p90,n,dofs_median,leaves_median`.
void write_seed_aggregate(std::ostream &os, std::span<const AdaptHistory> runs);

}  // namespace feinn
