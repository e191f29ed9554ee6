#include "tdflow/probes.hpp"

#include <algorithm>

namespace tdflow {

namespace {

constexpr Eigen::Index kBlock = 256;

double trace_cov_from_moments(double n, const RowVec& sum, double sq_sum) {
  return (sq_sum - sum.squaredNorm() / n) / (n - 1.0);
}

Estimate summarize(double value, const Vec& replicates, double level) {
  return {value, percentile_interval(std::vector<double>(replicates.data(), replicates.data() + replicates.size()),
                                     level)};
}

void feed_rows(TraceCovAccumulator& acc, const Mat& g) {
  for (Eigen::Index start = 0; start < g.rows(); start += kBlock) {
    const Eigen::Index len = std::min(kBlock, g.rows() - start);
    std::vector<Eigen::Index> index(static_cast<std::size_t>(len));
    for (Eigen::Index k = 0; k < len; ++k) index[static_cast<std::size_t>(k)] = start + k;
    acc.add(index, g.middleRows(start, len));
  }
}

}  // namespace

Interval percentile_interval(std::vector<double> stats, double level) {
  require(!stats.empty(), "percentile_interval: no replicates");
  std::sort(stats.begin(), stats.end());
  const double tail = 0.5 * (1.0 - level);
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(stats.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(stats.size() - 1, lo + 1);
    return stats[lo] + (pos - static_cast<double>(lo)) * (stats[hi] - stats[lo]);
  };
  return {quantile(tail), quantile(1.0 - tail)};
}

std::shared_ptr<const Mat> resample_counts(Eigen::Index n, int n_boot, Rng& rng) {
  auto counts = std::make_shared<Mat>(Mat::Zero(n_boot, n));
  for (int b = 0; b < n_boot; ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto pick = std::min(n - 1, static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(n)));
      (*counts)(b, pick) += 1.0;
    }
  }
  return counts;
}

TraceCovAccumulator::TraceCovAccumulator(std::shared_ptr<const Mat> counts, Eigen::Index dim)
    : counts_(std::move(counts)),
      sum_(RowVec::Zero(dim)),
      boot_sum_(Mat::Zero(counts_->rows(), dim)),
      boot_sq_sum_(Vec::Zero(counts_->rows())) {
  require(counts_->cols() >= 2, "TraceCovAccumulator: need at least two samples");
}

void TraceCovAccumulator::add(const std::vector<Eigen::Index>& index, const Mat& g) {
  require(static_cast<Eigen::Index>(index.size()) == g.rows() && g.cols() == sum_.size(),
          "TraceCovAccumulator: shape mismatch");
  const Vec sq = g.rowwise().squaredNorm();
  Mat w(counts_->rows(), g.rows());
  for (std::size_t k = 0; k < index.size(); ++k) w.col(static_cast<Eigen::Index>(k)) = counts_->col(index[k]);
  sum_ += g.colwise().sum();
  sq_sum_ += sq.sum();
  boot_sum_.noalias() += w * g;
  boot_sq_sum_.noalias() += w * sq;
  seen_ += g.rows();
}

double TraceCovAccumulator::value() const {
  require(seen_ == counts_->cols(), "TraceCovAccumulator: not every sample was added");
  return trace_cov_from_moments(static_cast<double>(seen_), sum_, sq_sum_);
}

Vec TraceCovAccumulator::replicates() const {
  require(seen_ == counts_->cols(), "TraceCovAccumulator: not every sample was added");
  const double n = static_cast<double>(seen_);
  Vec out(counts_->rows());
  for (Eigen::Index b = 0; b < out.size(); ++b) {
    out[b] = trace_cov_from_moments(n, boot_sum_.row(b), boot_sq_sum_[b]);
  }
  return out;
}

void for_each_sample_gradient(const VectorFieldNet& net, const TrajectoryDataset& ds,
                              const std::vector<PolicyPtr>& policies, const BootstrapModel& frozen, Algorithm algo,
                              const VarianceProbeConfig& cfg,
                              const std::function<void(Eigen::Index, const Vec&)>& sink) {
  require(cfg.n_samples >= 1000, "variance probe: need at least 1000 samples");
  TrainingStreams rng(cfg.seed);
  const auto batch = sample_transitions(ds, policies, net.arch().n_policies > 0, cfg.n_samples, rng);
  TargetConfig tcfg;
  tcfg.algorithm = algo;
  tcfg.gamma = cfg.gamma;
  tcfg.branch_mode = BranchMode::Weighted;
  tcfg.path = cfg.path;
  tcfg.t_cap = cfg.t_cap;
  tcfg.fixed_t = cfg.fixed_t;
  tcfg.fixed_x0 = cfg.fixed_x0;
  const RegressionBatch reg = sample_bellman_target(batch, tcfg, frozen, rng);

  // Sample i owns row i of the one-step block and row n + i of the bootstrap block when present.
  const Eigen::Index n = reg.n_source;
  const bool has_boot = reg.x.rows() > n;
  ModelParams grads;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Eigen::Index> rows{i};
    if (has_boot) rows.push_back(n + i);
    const auto m = static_cast<Eigen::Index>(rows.size());
    RegressionBatch one;
    one.t.resize(m);
    one.x.resize(m, reg.x.cols());
    one.target.resize(m, reg.target.cols());
    one.weight.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      const auto r = rows[static_cast<std::size_t>(k)];
      one.t[k] = reg.t[r];
      one.x.row(k) = reg.x.row(r);
      one.target.row(k) = reg.target.row(r);
      one.weight[k] = reg.weight[r];
      one.bootstrap.push_back(reg.bootstrap[static_cast<std::size_t>(r)]);
    }
    one.cond = reg.cond.select(rows);
    one.n_source = 1;
    regression_loss(net, one, grads);
    sink(i, grads.flatten());
  }
}

Estimate trace_covariance(const Mat& grads, int n_boot, double level, Rng& rng) {
  TraceCovAccumulator acc(resample_counts(grads.rows(), n_boot, rng), grads.cols());
  feed_rows(acc, grads);
  return summarize(acc.value(), acc.replicates(), level);
}

Estimate trace_covariance_difference(const Mat& a, const Mat& b, int n_boot, double level, Rng& rng) {
  require(a.rows() == b.rows(), "trace_covariance_difference: paired samples required");
  const auto counts = resample_counts(a.rows(), n_boot, rng);
  TraceCovAccumulator acc_a(counts, a.cols());
  TraceCovAccumulator acc_b(counts, b.cols());
  feed_rows(acc_a, a);
  feed_rows(acc_b, b);
  return summarize(acc_a.value() - acc_b.value(), acc_a.replicates() - acc_b.replicates(), level);
}

std::vector<VarianceReport> gradient_variance_probe(const VectorFieldNet& net, const TrajectoryDataset& ds,
                                                    const std::vector<PolicyPtr>& policies,
                                                    const BootstrapModel& frozen,
                                                    const std::vector<Algorithm>& algos,
                                                    const VarianceProbeConfig& cfg) {
  require(cfg.n_boot >= 1, "variance probe: n_boot must be positive");
  Rng boot_rng = make_rng(cfg.seed, 77);
  const auto counts = resample_counts(cfg.n_samples, cfg.n_boot, boot_rng);
  const Eigen::Index dim = net.params().n_scalars();

  std::vector<VarianceReport> out;
  std::vector<double> values;
  std::vector<Vec> replicates;
  for (const auto algo : algos) {
    TraceCovAccumulator acc(counts, dim);
    Mat block(kBlock, dim);
    std::vector<Eigen::Index> index;
    auto flush = [&] {
      if (index.empty()) return;
      acc.add(index, block.topRows(static_cast<Eigen::Index>(index.size())));
      index.clear();
    };
    for_each_sample_gradient(net, ds, policies, frozen, algo, cfg, [&](Eigen::Index i, const Vec& g) {
      block.row(static_cast<Eigen::Index>(index.size())) = g.transpose();
      index.push_back(i);
      if (static_cast<Eigen::Index>(index.size()) == kBlock) flush();
    });
    flush();

    VarianceReport report{algo, summarize(acc.value(), acc.replicates(), cfg.level), {}};
    for (std::size_t k = 0; k < values.size(); ++k) {
      report.minus_earlier.push_back(summarize(acc.value() - values[k], acc.replicates() - replicates[k], cfg.level));
    }
    values.push_back(acc.value());
    replicates.push_back(acc.replicates());
    out.push_back(std::move(report));
  }
  return out;
}

TransportReport transport_cost_probe(const FlowTarget& frozen, const TrajectoryDataset& ds,
                                     const std::vector<PolicyPtr>& policies, double gamma, int n, int n_boot,
                                     double level, std::uint64_t seed) {
  require(gamma >= 0.0 && gamma <= 1.0, "transport probe: gamma must lie in [0, 1]");
  require(n >= 2, "transport probe: need at least two samples");
  TrainingStreams rng(seed);
  const auto batch = sample_transitions(ds, policies, policies.size() > 1, n, rng);
  const Eigen::Index d = batch.s_next.cols();
  const Mat x0 = standard_normal(rng.noise, n, d);
  const Mat x0_other = standard_normal(rng.bootstrap, n, d);
  const Vec ones = Vec::Ones(n);
  const Mat coupled_end = frozen.push(ones, x0, batch.next);
  const Mat independent_end = frozen.push(ones, x0_other, batch.next);
  const Vec one_step = (batch.s_next - x0).rowwise().squaredNorm();
  const Vec coupled = (1.0 - gamma) * one_step + gamma * (coupled_end - x0).rowwise().squaredNorm();
  const Vec independent = (1.0 - gamma) * one_step + gamma * (independent_end - x0).rowwise().squaredNorm();
  const Vec gap = independent - coupled;

  auto as_vector = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  Rng boot = make_rng(seed, 78);
  TransportReport report;
  report.coupled = bootstrap_mean(as_vector(coupled), level, n_boot, boot);
  report.independent = bootstrap_mean(as_vector(independent), level, n_boot, boot);
  report.difference = bootstrap_mean(as_vector(gap), level, n_boot, boot);
  return report;
}

}  // namespace tdflow
