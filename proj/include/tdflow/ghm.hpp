#pragma once

#include "tdflow/diffusion.hpp"
#include "tdflow/env.hpp"
#include "tdflow/flow.hpp"
#include "tdflow/oracle.hpp"

#include <memory>

namespace tdflow {

/// A generative model of the successor measure: draws future states given (s, a[, policy]).
class GhmModel {
 public:
  virtual ~GhmModel() = default;
  virtual int dim() const = 0;
  /// One sample per conditioning row.
  virtual Mat sample(const Conditioning& cond, Rng& rng) const = 0;
  virtual bool has_likelihood() const { return false; }
  /// Row-wise log density of x under the model for matching conditioning rows.
  virtual Vec log_prob(const Conditioning& cond, const Mat& x) const;
};

using GhmPtr = std::shared_ptr<const GhmModel>;

/// Flow-matching GHM: pushes standard normal noise through the learned ODE.
class FlowGhm final : public GhmModel {
 public:
  FlowGhm(VectorFieldNet net, OdeSolverCfg solver = {}, int likelihood_steps = 100)
      : net_(std::move(net)), solver_(solver), likelihood_steps_(likelihood_steps) {}
  int dim() const override { return net_.arch().state_dim; }
  Mat sample(const Conditioning& cond, Rng& rng) const override;
  bool has_likelihood() const override { return true; }
  Vec log_prob(const Conditioning& cond, const Mat& x) const override;
  /// Deterministic map psi_1(x0 | cond).
  Mat push(const Conditioning& cond, const Mat& x0) const;
  const VectorFieldNet& net() const { return net_; }

 private:
  VectorFieldNet net_;
  OdeSolverCfg solver_;
  int likelihood_steps_;
};

/// Diffusion GHM: DDIM sampling, probability-flow likelihood.
class DiffusionGhm final : public GhmModel {
 public:
  DiffusionGhm(VectorFieldNet net, DiffusionSchedule sched = DiffusionSchedule(), int ddim_steps = 20,
               int likelihood_steps = 100)
      : net_(std::move(net)), sched_(sched), ddim_steps_(ddim_steps), likelihood_steps_(likelihood_steps) {}
  int dim() const override { return net_.arch().state_dim; }
  Mat sample(const Conditioning& cond, Rng& rng) const override;
  bool has_likelihood() const override { return true; }
  Vec log_prob(const Conditioning& cond, const Mat& x) const override;
  const VectorFieldNet& net() const { return net_; }
  const DiffusionSchedule& schedule() const { return sched_; }

 private:
  VectorFieldNet net_;
  DiffusionSchedule sched_;
  int ddim_steps_;
  int likelihood_steps_;
};

/// Exact sampler from a tabular measure field m(.|s,a), returning embedded states.
class TabularGhm final : public GhmModel {
 public:
  TabularGhm(std::shared_ptr<const TabularEnv> env, TabularMeasureField measure);
  int dim() const override { return env_->state_dim(); }
  Mat sample(const Conditioning& cond, Rng& rng) const override;
  const TabularMeasureField& measure() const { return measure_; }

 private:
  std::shared_ptr<const TabularEnv> env_;
  TabularMeasureField measure_;
};

/// Read-only view of a frozen flow model m^{(n)} used to build bootstrap targets.
class FlowTarget {
 public:
  virtual ~FlowTarget() = default;
  virtual int dim() const = 0;
  /// psi_t(x0 | cond) per row, with psi_0 the identity.
  virtual Mat push(const Vec& t, const Mat& x0, const Conditioning& cond) const = 0;
  virtual Mat velocity(const Vec& t, const Mat& x, const Conditioning& cond) const = 0;
};

class NetFlowTarget final : public FlowTarget {
 public:
  NetFlowTarget(const VectorFieldNet& net, OdeSolverCfg solver) : field_(net), solver_(solver) {}
  int dim() const override { return field_.dim(); }
  Mat push(const Vec& t, const Mat& x0, const Conditioning& cond) const override;
  Mat velocity(const Vec& t, const Mat& x, const Conditioning& cond) const override {
    return field_.velocity(t, x, cond);
  }

 private:
  NetField field_;
  OdeSolverCfg solver_;
};

/// Frozen model whose endpoint law is N(mu(s), scale^2 I) with mu(s) = offset + s.
/// Gaussian variant: the marginal field of the Gaussian path p_{t|1}.
/// Affine variant: straight non-crossing lines x_t = t (mu + scale x0) + (1 - t) x0.
class AnalyticFlowTarget final : public FlowTarget {
 public:
  enum class Kind { GaussianMarginal, StraightAffine };

  AnalyticFlowTarget(Kind kind, int dim, double scale, RowVec offset);
  int dim() const override { return dim_; }
  Mat push(const Vec& t, const Mat& x0, const Conditioning& cond) const override;
  Mat velocity(const Vec& t, const Mat& x, const Conditioning& cond) const override;
  RowVec endpoint_mean(const RowVec& s) const { return offset_ + s.head(dim_); }
  double scale() const { return scale_; }

 private:
  double spread(double t) const;
  double spread_dot(double t) const;

  Kind kind_;
  int dim_;
  double scale_;
  RowVec offset_;
};

}  // namespace tdflow
