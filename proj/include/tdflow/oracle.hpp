#pragma once

#include "tdflow/env.hpp"
#include "tdflow/path.hpp"

#include <vector>

namespace tdflow {

/// Measures m(x | s, a) over a finite state space; one row per (s, a) pair
/// in TabularMDP::row order.
struct TabularMeasureField {
  int n_states = 0;
  int n_actions = 0;
  Mat values;  // (n_states * n_actions) x n_states

  static TabularMeasureField uniform(int n_states, int n_actions);
  static TabularMeasureField random(int n_states, int n_actions, Rng& rng);
  void validate(double tol = 1e-10) const;
  Eigen::Ref<const RowVec> slice(int s, int a) const { return values.row(s * n_actions + a); }
};

/// Time-indexed family of measure fields on a strictly increasing grid from 0 to 1.
struct DiscretizedPath {
  std::vector<double> grid;
  std::vector<TabularMeasureField> measures;

  void validate() const;
};

TabularMeasureField successor_measure_exact(const TabularMDP& mdp, const TabularPolicy& pi, double gamma);

/// (1 - gamma) P + gamma P Pi m.
TabularMeasureField bellman_apply(const TabularMeasureField& m, const TabularMDP& mdp, const TabularPolicy& pi,
                                  double gamma);

/// Row-stochastic kernel K_t(x | x1) obtained by projecting the Gaussian
/// conditional path N(alpha_t e(x1), beta_t^2 I) onto the embedded states.
/// K_1 is the identity and K_0 does not depend on x1.
Mat path_smoothing_kernel(const ConditionalPath& path, double t, const Mat& embedding);

/// Slice-wise (1 - gamma) P K_t + gamma P Pi m_t.
DiscretizedPath path_bellman_apply(const DiscretizedPath& path, const TabularMDP& mdp, const TabularPolicy& pi,
                                   double gamma, const ConditionalPath& cond_path, const Mat& embedding);

/// The fixed point of path_bellman_apply: m^pi K_t on every grid point.
DiscretizedPath successor_path_exact(const std::vector<double>& grid, const TabularMDP& mdp,
                                     const TabularPolicy& pi, double gamma, const ConditionalPath& cond_path,
                                     const Mat& embedding);

/// Largest W1 over (s, a) between two measure fields.
double sup_w1(const TabularMeasureField& a, const TabularMeasureField& b, const Mat& embedding);
/// Largest W1 over (s, a) and grid time between two discretized paths.
double sup_w1(const DiscretizedPath& a, const DiscretizedPath& b, const Mat& embedding);
double sup_abs_diff(const TabularMeasureField& a, const TabularMeasureField& b);

/// Q(s, a) = (1 - gamma)^-1 sum_x m(x | s, a) r(x); returned as n_states x n_actions.
Mat value_exact(const TabularMDP& mdp, const TabularPolicy& pi, const Vec& reward, double gamma);

}  // namespace tdflow
