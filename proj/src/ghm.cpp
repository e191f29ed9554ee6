#include "tdflow/ghm.hpp"

#include <cmath>

namespace tdflow {

Vec GhmModel::log_prob(const Conditioning& /*cond*/, const Mat& /*x*/) const {
  throw ConfigError("this model has no likelihood");
}

Mat FlowGhm::push(const Conditioning& cond, const Mat& x0) const {
  return ode_push(NetField(net_), cond, x0, 1.0, solver_);
}

Mat FlowGhm::sample(const Conditioning& cond, Rng& rng) const {
  return push(cond, standard_normal(rng, cond.rows(), dim()));
}

Vec FlowGhm::log_prob(const Conditioning& cond, const Mat& x) const {
  return log_likelihood(NetField(net_), cond, x, likelihood_steps_).log_prob;
}

Mat DiffusionGhm::sample(const Conditioning& cond, Rng& rng) const {
  const NetNoisePredictor eps(net_);
  return ddim_sample(sched_, eps, cond, standard_normal(rng, cond.rows(), dim()), ddim_steps_);
}

Vec DiffusionGhm::log_prob(const Conditioning& cond, const Mat& x) const {
  const NetNoisePredictor eps(net_);
  const ProbabilityFlowField field(sched_, eps, dim());
  return log_likelihood(field, cond, x, likelihood_steps_).log_prob;
}

TabularGhm::TabularGhm(std::shared_ptr<const TabularEnv> env, TabularMeasureField measure)
    : env_(std::move(env)), measure_(std::move(measure)) {
  require(env_ != nullptr, "TabularGhm: null environment");
  measure_.validate();
  require(measure_.n_states == env_->mdp().n_states && measure_.n_actions == env_->mdp().n_actions,
          "TabularGhm: measure does not match the environment");
}

Mat TabularGhm::sample(const Conditioning& cond, Rng& rng) const {
  Mat out(cond.rows(), dim());
  for (Eigen::Index i = 0; i < cond.rows(); ++i) {
    const int s = env_->index_of(cond.s.row(i).transpose());
    const int a = env_->action_index(cond.a.row(i).transpose());
    require(s >= 0 && a >= 0, "TabularGhm: conditioning is not a tabular state-action pair");
    const auto m = measure_.slice(s, a);
    const double u = uniform01(rng);
    int x = 0;
    double acc = m[0];
    while (acc <= u && x + 1 < m.size()) {
      acc += m[++x];
    }
    out.row(i) = env_->embedding().row(x);
  }
  return out;
}

Mat NetFlowTarget::push(const Vec& t, const Mat& x0, const Conditioning& cond) const {
  return ode_integrate(field_, cond, x0, Vec::Zero(t.size()), t, solver_);
}

AnalyticFlowTarget::AnalyticFlowTarget(Kind kind, int dim, double scale, RowVec offset)
    : kind_(kind), dim_(dim), scale_(scale), offset_(std::move(offset)) {
  require(dim_ >= 1 && scale_ > 0.0 && offset_.size() == dim_, "AnalyticFlowTarget: invalid parameters");
}

double AnalyticFlowTarget::spread(double t) const {
  if (kind_ == Kind::GaussianMarginal) {
    return std::sqrt(t * t * scale_ * scale_ + (1.0 - t) * (1.0 - t));
  }
  return t * scale_ + 1.0 - t;
}

double AnalyticFlowTarget::spread_dot(double t) const {
  if (kind_ == Kind::GaussianMarginal) {
    return (t * scale_ * scale_ - (1.0 - t)) / spread(t);
  }
  return scale_ - 1.0;
}

Mat AnalyticFlowTarget::push(const Vec& t, const Mat& x0, const Conditioning& cond) const {
  Mat out(x0.rows(), dim_);
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    out.row(i) = t[i] * endpoint_mean(cond.s.row(i)) + spread(t[i]) * x0.row(i);
  }
  return out;
}

Mat AnalyticFlowTarget::velocity(const Vec& t, const Mat& x, const Conditioning& cond) const {
  Mat out(x.rows(), dim_);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const RowVec mu = endpoint_mean(cond.s.row(i));
    out.row(i) = mu + (spread_dot(t[i]) / spread(t[i])) * (x.row(i) - t[i] * mu);
  }
  return out;
}

}  // namespace tdflow
