#include "tdflow/diffusion.hpp"

namespace tdflow {

DiffusionSchedule::DiffusionSchedule(double beta_min, double beta_max, int n_steps)
    : beta_min_(beta_min), beta_max_(beta_max), n_steps_(n_steps) {
  require(beta_min_ > 0.0 && beta_max_ > beta_min_, "diffusion schedule: need 0 < beta_min < beta_max");
  require(n_steps_ >= 1, "diffusion schedule: n_steps must be >= 1");
  betas_ = Vec::Zero(n_steps_ + 1);
  alpha_bar_discrete_ = Vec::Ones(n_steps_ + 1);
  for (int i = 1; i <= n_steps_; ++i) {
    betas_[i] = -std::expm1(log_alpha_bar(time_of(i)) - log_alpha_bar(time_of(i - 1)));
    alpha_bar_discrete_[i] = alpha_bar_discrete_[i - 1] * (1.0 - betas_[i]);
  }
}

double DiffusionSchedule::alpha_bar(double t) const { return std::exp(log_alpha_bar(t)); }

Mat forward_kernel_sample(const DiffusionSchedule& sched, const Vec& t, const Mat& x0, const Mat& noise) {
  require(t.size() == x0.rows() && noise.rows() == x0.rows() && noise.cols() == x0.cols(),
          "forward_kernel_sample: shape mismatch");
  Mat out(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    require(t[i] >= 0.0 && t[i] <= 1.0, "forward_kernel_sample: t must lie in [0, 1]");
    out.row(i) = sched.alpha(t[i]) * x0.row(i) + sched.sigma(t[i]) * noise.row(i);
  }
  return out;
}

Mat score_target(const DiffusionSchedule& sched, const Vec& t, const Mat& x_t, const Mat& x0) {
  require(t.size() == x0.rows() && x_t.rows() == x0.rows() && x_t.cols() == x0.cols(), "score_target: shape mismatch");
  Mat out(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    const double s = sched.sigma(t[i]);
    require(s > 0.0, "score_target: undefined at t = 0");
    out.row(i) = -(x_t.row(i) - sched.alpha(t[i]) * x0.row(i)) / (s * s);
  }
  return out;
}

Mat ddim_step(const DiffusionSchedule& sched, const Vec& t_from, const Vec& t_to, const Mat& x, const Mat& eps_hat) {
  require(t_from.size() == x.rows() && t_to.size() == x.rows() && eps_hat.rows() == x.rows(),
          "ddim_step: shape mismatch");
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    require(t_to[i] < t_from[i], "ddim_step: t_to must be smaller than t_from");
    const double a_from = sched.alpha(t_from[i]);
    if (a_from <= 0.0) {
      throw NumericError("ddim_step: alpha at t_from is zero");
    }
    const RowVec x0_hat = (x.row(i) - sched.sigma(t_from[i]) * eps_hat.row(i)) / a_from;
    out.row(i) = sched.alpha(t_to[i]) * x0_hat + sched.sigma(t_to[i]) * eps_hat.row(i);
  }
  return out;
}

Mat ddim_chain(const DiffusionSchedule& sched, const NoisePredictor& eps, const Conditioning& cond, const Mat& x,
               const Vec& t_start, const Vec& t_end, int n_steps) {
  require(n_steps >= 1, "ddim_chain: n_steps must be >= 1");
  require(t_start.size() == x.rows() && t_end.size() == x.rows(), "ddim_chain: one start and end time per row");
  Mat state = x;
  Vec t_from = t_start;
  for (int k = 1; k <= n_steps; ++k) {
    const Vec t_to = t_start + (static_cast<double>(k) / n_steps) * (t_end - t_start);
    state = ddim_step(sched, t_from, t_to, state, eps.predict(t_from, state, cond));
    if (!state.allFinite()) {
      throw NumericError("ddim_chain: non-finite state");
    }
    t_from = t_to;
  }
  return state;
}

Mat ddim_sample(const DiffusionSchedule& sched, const NoisePredictor& eps, const Conditioning& cond,
                const Mat& noise, int n_steps) {
  return ddim_chain(sched, eps, cond, noise, Vec::Ones(noise.rows()), Vec::Zero(noise.rows()), n_steps);
}

Mat probability_flow_velocity(const DiffusionSchedule& sched, const Vec& t, const Mat& x, const Mat& eps_hat) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double s = sched.sigma(t[i]);
    require(s > 0.0, "probability flow: undefined at t = 0");
    out.row(i) = -0.5 * sched.beta(t[i]) * (x.row(i) - eps_hat.row(i) / s);
  }
  return out;
}

Mat ProbabilityFlowField::velocity(const Vec& tau, const Mat& x, const Conditioning& cond) const {
  Vec t(tau.size());
  for (Eigen::Index i = 0; i < tau.size(); ++i) {
    t[i] = diffusion_time(tau[i]);
  }
  return -(1.0 - t_min_) * probability_flow_velocity(sched_, t, x, eps_.predict(t, x, cond));
}

Mat ProbabilityFlowField::velocity_divergence(const Vec& tau, const Mat& x, const Conditioning& cond, Vec& div) const {
  Vec t(tau.size());
  for (Eigen::Index i = 0; i < tau.size(); ++i) {
    t[i] = diffusion_time(tau[i]);
  }
  Vec trace;
  const Mat e = eps_.predict_with_trace(t, x, cond, trace);
  div.resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double half_beta = 0.5 * sched_.beta(t[i]);
    div[i] = (1.0 - t_min_) * half_beta * (static_cast<double>(x.cols()) - trace[i] / sched_.sigma(t[i]));
  }
  return -(1.0 - t_min_) * probability_flow_velocity(sched_, t, x, e);
}

Mat GaussianOptimalPredictor::predict(const Vec& t, const Mat& x, const Conditioning& /*cond*/) const {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double a = sched_.alpha(t[i]);
    const double s = sched_.sigma(t[i]);
    out.row(i) = s * (x.row(i) - a * mean_) / (a * a * std_ * std_ + s * s);
  }
  return out;
}

Mat GaussianOptimalPredictor::predict_with_trace(const Vec& t, const Mat& x, const Conditioning& cond,
                                                 Vec& trace) const {
  trace.resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double a = sched_.alpha(t[i]);
    const double s = sched_.sigma(t[i]);
    trace[i] = static_cast<double>(x.cols()) * s / (a * a * std_ * std_ + s * s);
  }
  return predict(t, x, cond);
}

RowVec mixture_drift(const std::vector<double>& weights, const std::vector<double>& densities,
                     const std::vector<RowVec>& drifts) {
  require(!weights.empty() && weights.size() == densities.size() && weights.size() == drifts.size(),
          "mixture_drift: one weight, density and drift per component");
  RowVec num = RowVec::Zero(drifts.front().size());
  double den = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    num += weights[i] * densities[i] * drifts[i];
    den += weights[i] * densities[i];
  }
  if (!(den > 0.0)) throw NumericError("mixture_drift: zero mixture density");
  return num / den;
}

Mat euler_maruyama(const DriftFn& drift, const std::function<double(double)>& diffusion, const Mat& x0, double t0,
                   double t1, int n_steps, Rng& rng) {
  require(n_steps >= 1, "euler_maruyama: n_steps must be positive");
  const double dt = (t1 - t0) / n_steps;
  const double sqrt_dt = std::sqrt(std::abs(dt));
  Mat x = x0;
  for (int k = 0; k < n_steps; ++k) {
    const double t = t0 + k * dt;
    const double g = diffusion(t);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const RowVec f = drift(x.row(i), t);
      x.row(i) += f * dt + g * sqrt_dt * standard_normal(rng, 1, x.cols());
    }
  }
  return x;
}

}  // namespace tdflow
