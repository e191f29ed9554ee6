#pragma once

#include "tdflow/flow.hpp"
#include "tdflow/network.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace tdflow {

/// Variance-preserving schedule on normalized time t in [0, 1], t = 0 being data:
/// beta(t) = beta_min + t (beta_max - beta_min), alpha_bar(t) = exp(-int_0^t beta).
/// The discrete grid t_i = i / n_steps uses beta_i = 1 - alpha_bar(t_i) / alpha_bar(t_{i-1}).
class DiffusionSchedule {
 public:
  explicit DiffusionSchedule(double beta_min = 0.1, double beta_max = 20.0, int n_steps = 1000);

  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }
  int n_steps() const { return n_steps_; }

  double beta(double t) const { return beta_min_ + t * (beta_max_ - beta_min_); }
  double alpha_bar(double t) const;
  double alpha(double t) const { return std::sqrt(alpha_bar(t)); }
  double sigma(double t) const { return std::sqrt(-std::expm1(log_alpha_bar(t))); }
  double log_alpha_bar(double t) const { return -(beta_min_ * t + 0.5 * (beta_max_ - beta_min_) * t * t); }

  double time_of(int index) const { return static_cast<double>(index) / n_steps_; }
  /// Discrete betas for indices 1..n_steps (entry 0 is unused and zero).
  const Vec& discrete_betas() const { return betas_; }
  /// prod_{j <= index} (1 - beta_j).
  double discrete_alpha_bar(int index) const { return alpha_bar_discrete_[index]; }

 private:
  double beta_min_;
  double beta_max_;
  int n_steps_;
  Vec betas_;
  Vec alpha_bar_discrete_;
};

/// x_t = alpha_t x0 + sigma_t noise, per-row t.
Mat forward_kernel_sample(const DiffusionSchedule& sched, const Vec& t, const Mat& x0, const Mat& noise);
/// grad log q_{t|0}(x_t | x0) = -(x_t - alpha_t x0) / sigma_t^2. Rejects sigma_t = 0.
Mat score_target(const DiffusionSchedule& sched, const Vec& t, const Mat& x_t, const Mat& x0);

/// Deterministic DDIM update given a noise prediction eps_hat made at t_from.
Mat ddim_step(const DiffusionSchedule& sched, const Vec& t_from, const Vec& t_to, const Mat& x, const Mat& eps_hat);

/// Anything that predicts noise from (t, x_t, conditioning).
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Mat predict(const Vec& t, const Mat& x, const Conditioning& cond) const = 0;
  /// Prediction and the trace of its Jacobian with respect to x.
  virtual Mat predict_with_trace(const Vec& t, const Mat& x, const Conditioning& cond, Vec& trace) const = 0;
};

class NetNoisePredictor final : public NoisePredictor {
 public:
  explicit NetNoisePredictor(const VectorFieldNet& net) : net_(net) {}
  Mat predict(const Vec& t, const Mat& x, const Conditioning& cond) const override { return net_.forward(t, x, cond); }
  Mat predict_with_trace(const Vec& t, const Mat& x, const Conditioning& cond, Vec& trace) const override {
    return net_.forward_with_divergence(t, x, cond, trace);
  }

 private:
  const VectorFieldNet& net_;
};

/// Runs a DDIM chain per row from t_start[i] down to t_end[i] in n_steps equal steps.
Mat ddim_chain(const DiffusionSchedule& sched, const NoisePredictor& eps, const Conditioning& cond, const Mat& x,
               const Vec& t_start, const Vec& t_end, int n_steps);
/// Full sampler: x_1 ~ N(0, I) supplied by the caller, chain from t = 1 to t = 0.
Mat ddim_sample(const DiffusionSchedule& sched, const NoisePredictor& eps, const Conditioning& cond,
                const Mat& noise, int n_steps = 20);

/// Probability-flow velocity in diffusion time: -1/2 beta(t) (x - eps_hat / sigma_t).
Mat probability_flow_velocity(const DiffusionSchedule& sched, const Vec& t, const Mat& x, const Mat& eps_hat);

/// The probability-flow ODE re-timed so that flow time tau = 0 is noise and tau = 1
/// is diffusion time t_min; usable wherever a Field is expected (likelihoods).
class ProbabilityFlowField final : public Field {
 public:
  ProbabilityFlowField(const DiffusionSchedule& sched, const NoisePredictor& eps, int dim, double t_min = 1e-3)
      : sched_(sched), eps_(eps), dim_(dim), t_min_(t_min) {}
  int dim() const override { return dim_; }
  Mat velocity(const Vec& tau, const Mat& x, const Conditioning& cond) const override;
  Mat velocity_divergence(const Vec& tau, const Mat& x, const Conditioning& cond, Vec& div) const override;
  double diffusion_time(double tau) const { return 1.0 - tau * (1.0 - t_min_); }

 private:
  const DiffusionSchedule& sched_;
  const NoisePredictor& eps_;
  int dim_;
  double t_min_;
};

/// Optimal noise prediction for data N(mean, std^2 I): sigma (x - alpha mean) / (alpha^2 std^2 + sigma^2).
class GaussianOptimalPredictor final : public NoisePredictor {
 public:
  GaussianOptimalPredictor(const DiffusionSchedule& sched, RowVec mean, double std)
      : sched_(sched), mean_(std::move(mean)), std_(std) {}
  Mat predict(const Vec& t, const Mat& x, const Conditioning& cond) const override;
  Mat predict_with_trace(const Vec& t, const Mat& x, const Conditioning& cond, Vec& trace) const override;

 private:
  const DiffusionSchedule& sched_;
  RowVec mean_;
  double std_;
};

/// Drift of the SDE whose marginals are the mixture sum_i w_i p_i of component processes that
/// share one diffusion coefficient: sum_i w_i p_i(x) f_i(x) / sum_i w_i p_i(x).
RowVec mixture_drift(const std::vector<double>& weights, const std::vector<double>& densities,
                     const std::vector<RowVec>& drifts);

using DriftFn = std::function<RowVec(const RowVec& x, double t)>;

/// Euler-Maruyama for dX = f(X, t) dt + g(t) dW from t0 to t1, one particle per row.
Mat euler_maruyama(const DriftFn& drift, const std::function<double(double)>& diffusion, const Mat& x0, double t0,
                   double t1, int n_steps, Rng& rng);

}  // namespace tdflow
