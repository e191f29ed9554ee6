#include "tdflow/stats.hpp"

#include <algorithm>
#include <cmath>

namespace tdflow {

double mean(const std::vector<double>& xs) {
  require(!xs.empty(), "mean: empty sample");
  double acc = 0.0;
  for (const double x : xs) {
    acc += x;
  }
  return acc / static_cast<double>(xs.size());
}

double variance(const std::vector<double>& xs) {
  require(xs.size() >= 2, "variance: need at least two values");
  const double m = mean(xs);
  double acc = 0.0;
  for (const double x : xs) {
    acc += (x - m) * (x - m);
  }
  return acc / static_cast<double>(xs.size() - 1);
}

double standard_error(const std::vector<double>& xs) {
  return std::sqrt(variance(xs) / static_cast<double>(xs.size()));
}

Estimate bootstrap(const std::vector<double>& xs, const std::function<double(const std::vector<double>&)>& statistic,
                   double level, int n_boot, Rng& rng) {
  require(!xs.empty(), "bootstrap: empty sample");
  require(level > 0.0 && level < 1.0 && n_boot >= 10, "bootstrap: need level in (0,1) and n_boot >= 10");
  std::vector<double> stats(static_cast<std::size_t>(n_boot));
  std::vector<double> resample(xs.size());
  const auto n = static_cast<double>(xs.size());
  for (auto& s : stats) {
    for (auto& r : resample) {
      r = xs[std::min(xs.size() - 1, static_cast<std::size_t>(uniform01(rng) * n))];
    }
    s = statistic(resample);
  }
  std::sort(stats.begin(), stats.end());
  const double tail = 0.5 * (1.0 - level);
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(stats.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(stats.size() - 1, lo + 1);
    return stats[lo] + (pos - static_cast<double>(lo)) * (stats[hi] - stats[lo]);
  };
  return {statistic(xs), {quantile(tail), quantile(1.0 - tail)}};
}

Estimate bootstrap_mean(const std::vector<double>& xs, double level, int n_boot, Rng& rng) {
  return bootstrap(xs, [](const std::vector<double>& v) { return mean(v); }, level, n_boot, rng);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double kolmogorov_sf(double lambda) {
  // The alternating series converges slowly near 0, where the value is 1 to double precision anyway.
  if (lambda < 0.2) {
    return 1.0;
  }
  double acc = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    acc += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) {
      break;
    }
  }
  return std::clamp(acc, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  return {d, kolmogorov_sf(lambda)};
}

KsResult ks_one_sample(std::vector<double> xs, const std::function<double(double)>& cdf) {
  require(!xs.empty(), "ks_one_sample: empty sample");
  std::sort(xs.begin(), xs.end());
  const auto n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  return {d, kolmogorov_sf(lambda)};
}

}  // namespace tdflow
