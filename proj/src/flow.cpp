#include "tdflow/flow.hpp"

#include <cmath>
#include <numbers>

namespace tdflow {

Mat FunctionField::velocity(const Vec& t, const Mat& x, const Conditioning& /*cond*/) const {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out.row(i) = v_(t[i], x.row(i), i);
  }
  return out;
}

Mat FunctionField::velocity_divergence(const Vec& t, const Mat& x, const Conditioning& cond, Vec& div) const {
  Mat out = velocity(t, x, cond);
  div.resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (div_) {
      div[i] = div_(t[i], x.row(i), i);
      continue;
    }
    double acc = 0.0;
    const double h = 1e-5;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      RowVec xp = x.row(i), xm = x.row(i);
      xp[j] += h;
      xm[j] -= h;
      acc += (v_(t[i], xp, i)[j] - v_(t[i], xm, i)[j]) / (2.0 * h);
    }
    div[i] = acc;
  }
  return out;
}

Mat ode_integrate(const Field& field, const Conditioning& cond, const Mat& x, const Vec& t_start, const Vec& t_end,
                  const OdeSolverCfg& cfg) {
  require(cfg.n_steps >= 1, "ode: n_steps must be >= 1");
  require(t_start.size() == x.rows() && t_end.size() == x.rows(), "ode: one start and end time per row");
  const Vec h = (t_end - t_start) / static_cast<double>(cfg.n_steps);
  Mat state = x;
  Vec t = t_start;
  for (int k = 0; k < cfg.n_steps; ++k) {
    const Mat v0 = field.velocity(t, state, cond);
    const Mat mid = state + 0.5 * (h.asDiagonal() * v0);
    const Vec t_mid = t + 0.5 * h;
    state += h.asDiagonal() * field.velocity(t_mid, mid, cond);
    t = t_start + (static_cast<double>(k + 1) / cfg.n_steps) * (t_end - t_start);
    if (!state.allFinite()) {
      throw NumericError("ode: non-finite state during integration");
    }
  }
  return state;
}

Mat ode_push(const Field& field, const Conditioning& cond, const Mat& x0, const Vec& t_end, const OdeSolverCfg& cfg) {
  require((t_end.array() > 0.0).all() && (t_end.array() <= 1.0).all(), "ode_push: t_end must lie in (0, 1]");
  return ode_integrate(field, cond, x0, Vec::Zero(x0.rows()), t_end, cfg);
}

Mat ode_push(const Field& field, const Conditioning& cond, const Mat& x0, double t_end, const OdeSolverCfg& cfg) {
  return ode_push(field, cond, x0, Vec::Constant(x0.rows(), t_end), cfg);
}

Vec standard_normal_log_density(const Mat& x) {
  const double c = -0.5 * static_cast<double>(x.cols()) * std::log(2.0 * std::numbers::pi);
  return (c - 0.5 * x.rowwise().squaredNorm().array()).matrix();
}

LikelihoodResult log_likelihood(const Field& field, const Conditioning& cond, const Mat& x1, int n_steps) {
  require(n_steps >= 1, "log_likelihood: n_steps must be >= 1");
  if (!x1.allFinite()) {
    throw NumericError("log_likelihood: non-finite input");
  }
  const double h = -1.0 / n_steps;
  Mat state = x1;
  Vec integral = Vec::Zero(x1.rows());
  Vec div;
  for (int k = 0; k < n_steps; ++k) {
    const double t = 1.0 + k * h;
    const Mat v0 = field.velocity(Vec::Constant(x1.rows(), t), state, cond);
    const Mat mid = state + 0.5 * h * v0;
    const Mat vm = field.velocity_divergence(Vec::Constant(x1.rows(), t + 0.5 * h), mid, cond, div);
    state += h * vm;
    integral += (-h) * div;
    if (!state.allFinite() || !integral.allFinite()) {
      throw NumericError("log_likelihood: non-finite trajectory");
    }
  }
  LikelihoodResult r;
  r.log_prob = standard_normal_log_density(state) - integral;
  r.x0 = std::move(state);
  return r;
}

}  // namespace tdflow
