#pragma once

#include "tdflow/common.hpp"

#include <functional>
#include <vector>

namespace tdflow {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
};

struct Estimate {
  double value = 0.0;
  Interval ci;
};

double mean(const std::vector<double>& xs);
double variance(const std::vector<double>& xs);  // unbiased
double standard_error(const std::vector<double>& xs);

/// Percentile bootstrap CI for statistic(resample) with `n_boot` resamples.
Estimate bootstrap(const std::vector<double>& xs, const std::function<double(const std::vector<double>&)>& statistic,
                   double level, int n_boot, Rng& rng);
Estimate bootstrap_mean(const std::vector<double>& xs, double level, int n_boot, Rng& rng);

double normal_cdf(double x);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);
/// One-sample test against a continuous CDF.
KsResult ks_one_sample(std::vector<double> xs, const std::function<double(double)>& cdf);
/// Survival function of the Kolmogorov distribution.
double kolmogorov_sf(double lambda);

}  // namespace tdflow
