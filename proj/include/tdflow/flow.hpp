#pragma once

#include "tdflow/network.hpp"
#include "tdflow/path.hpp"

#include <functional>

namespace tdflow {

/// A time-dependent vector field over batches of points.
class Field {
 public:
  virtual ~Field() = default;
  virtual int dim() const = 0;
  virtual Mat velocity(const Vec& t, const Mat& x, const Conditioning& cond) const = 0;
  /// Velocity plus the exact divergence with respect to x for every row.
  virtual Mat velocity_divergence(const Vec& t, const Mat& x, const Conditioning& cond, Vec& div) const = 0;
};

/// Adapts a VectorFieldNet (flow-matching parameterization).
class NetField final : public Field {
 public:
  explicit NetField(const VectorFieldNet& net) : net_(net) {}
  int dim() const override { return net_.arch().state_dim; }
  Mat velocity(const Vec& t, const Mat& x, const Conditioning& cond) const override {
    return net_.forward(t, x, cond);
  }
  Mat velocity_divergence(const Vec& t, const Mat& x, const Conditioning& cond, Vec& div) const override {
    return net_.forward_with_divergence(t, x, cond, div);
  }

 private:
  const VectorFieldNet& net_;
};

/// Field defined by a per-row closure; divergence by central differences unless supplied.
class FunctionField final : public Field {
 public:
  using VelocityFn = std::function<RowVec(double t, const RowVec& x, Eigen::Index row)>;
  using DivergenceFn = std::function<double(double t, const RowVec& x, Eigen::Index row)>;

  FunctionField(int dim, VelocityFn v, DivergenceFn div = {}) : dim_(dim), v_(std::move(v)), div_(std::move(div)) {}
  int dim() const override { return dim_; }
  Mat velocity(const Vec& t, const Mat& x, const Conditioning& cond) const override;
  Mat velocity_divergence(const Vec& t, const Mat& x, const Conditioning& cond, Vec& div) const override;

 private:
  int dim_;
  VelocityFn v_;
  DivergenceFn div_;
};

struct OdeSolverCfg {
  int n_steps = 10;
};

/// Midpoint integration from t_start[i] to t_end[i] per row with n_steps equal steps.
/// Works in either direction. Throws NumericError if the state becomes non-finite.
Mat ode_integrate(const Field& field, const Conditioning& cond, const Mat& x, const Vec& t_start, const Vec& t_end,
                  const OdeSolverCfg& cfg);

/// psi_{t_end}(x0): integrate from 0 to t_end (per row or shared).
Mat ode_push(const Field& field, const Conditioning& cond, const Mat& x0, const Vec& t_end, const OdeSolverCfg& cfg);
Mat ode_push(const Field& field, const Conditioning& cond, const Mat& x0, double t_end, const OdeSolverCfg& cfg);

struct LikelihoodResult {
  Vec log_prob;
  Mat x0;
};

/// log p(x1) = log N(x0; 0, I) - integral_0^1 div v(x_t) dt, integrating the
/// state backwards from t = 1 with the midpoint rule.
LikelihoodResult log_likelihood(const Field& field, const Conditioning& cond, const Mat& x1, int n_steps = 100);

/// Row-wise log density of the standard normal.
Vec standard_normal_log_density(const Mat& x);

}  // namespace tdflow
