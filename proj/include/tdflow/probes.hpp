#pragma once

#include "tdflow/losses.hpp"
#include "tdflow/stats.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace tdflow {

struct VarianceProbeConfig {
  double gamma = 0.99;
  PathKind path = PathKind::Straight;
  int n_samples = 10000;
  int n_boot = 200;
  double level = 0.95;
  double t_cap = 1e-6;
  std::uint64_t seed = 0;
  std::optional<double> fixed_t;
  std::optional<RowVec> fixed_x0;
};

/// Calls `sink(i, g_i)` with the gradient of the weighted (1 - gamma, gamma) loss of sample i.
/// All algorithms share t, (s, a, s') and X0 draws for the same seed.
void for_each_sample_gradient(const VectorFieldNet& net, const TrajectoryDataset& ds,
                              const std::vector<PolicyPtr>& policies, const BootstrapModel& frozen, Algorithm algo,
                              const VarianceProbeConfig& cfg,
                              const std::function<void(Eigen::Index, const Vec&)>& sink);

/// Streaming unbiased Tr(Cov) of n vectors plus its value under fixed bootstrap resamples.
/// Accumulators built from the same `counts` give paired bootstrap replicates.
class TraceCovAccumulator {
 public:
  /// counts: n_boot x n resample multiplicities.
  TraceCovAccumulator(std::shared_ptr<const Mat> counts, Eigen::Index dim);
  /// Rows of `g` are the vectors with sample indices `index`.
  void add(const std::vector<Eigen::Index>& index, const Mat& g);
  double value() const;
  Vec replicates() const;

 private:
  std::shared_ptr<const Mat> counts_;
  RowVec sum_;
  double sq_sum_ = 0.0;
  Mat boot_sum_;
  Vec boot_sq_sum_;
  Eigen::Index seen_ = 0;
};

/// Multinomial resample counts, n_boot x n.
std::shared_ptr<const Mat> resample_counts(Eigen::Index n, int n_boot, Rng& rng);
Interval percentile_interval(std::vector<double> stats, double level);

/// Tr(Cov) of the rows of `grads` (unbiased) with a percentile bootstrap CI.
Estimate trace_covariance(const Mat& grads, int n_boot, double level, Rng& rng);
/// Tr(Cov(a)) - Tr(Cov(b)) with a paired bootstrap CI (rows of a and b share their random inputs).
Estimate trace_covariance_difference(const Mat& a, const Mat& b, int n_boot, double level, Rng& rng);

struct VarianceReport {
  Algorithm algorithm;
  Estimate trace_cov;
  /// Paired Tr(Cov) differences against each earlier entry of the report, in order.
  std::vector<Estimate> minus_earlier;
};

/// Gradient-variance probe over `algos` with a frozen previous iterate.
std::vector<VarianceReport> gradient_variance_probe(const VectorFieldNet& net, const TrajectoryDataset& ds,
                                                    const std::vector<PolicyPtr>& policies,
                                                    const BootstrapModel& frozen,
                                                    const std::vector<Algorithm>& algos,
                                                    const VarianceProbeConfig& cfg);

struct TransportReport {
  Estimate coupled;      // X1 built from the same X0 through the frozen flow
  Estimate independent;  // X1 drawn from the Bellman target independently of X0
  Estimate difference;   // independent - coupled, paired
};

/// Mean ||X1 - X0||^2 for the two endpoint constructions, averaging the
/// Bellman mixture analytically: (1 - gamma) ||S' - X0||^2 + gamma ||X1_boot - X0||^2.
TransportReport transport_cost_probe(const FlowTarget& frozen, const TrajectoryDataset& ds,
                                     const std::vector<PolicyPtr>& policies, double gamma, int n, int n_boot,
                                     double level, std::uint64_t seed);

}  // namespace tdflow
