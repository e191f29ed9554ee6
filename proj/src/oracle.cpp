#include "tdflow/oracle.hpp"

#include "tdflow/transport.hpp"

#include <algorithm>
#include <cmath>

namespace tdflow {

TabularMeasureField TabularMeasureField::uniform(int n_states, int n_actions) {
  return {n_states, n_actions, Mat::Constant(n_states * n_actions, n_states, 1.0 / n_states)};
}

TabularMeasureField TabularMeasureField::random(int n_states, int n_actions, Rng& rng) {
  TabularMeasureField m{n_states, n_actions, Mat(n_states * n_actions, n_states)};
  for (Eigen::Index i = 0; i < m.values.size(); ++i) {
    m.values.data()[i] = -std::log(1.0 - uniform01(rng));
  }
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    m.values.row(r) /= m.values.row(r).sum();
  }
  return m;
}

void TabularMeasureField::validate(double tol) const {
  require(values.rows() == n_states * n_actions && values.cols() == n_states, "measure field: shape mismatch");
  require((values.array() >= -tol).all(), "measure field: negative mass");
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    require(std::abs(values.row(r).sum() - 1.0) <= tol, "measure field: slice does not sum to 1");
  }
}

void DiscretizedPath::validate() const {
  require(!grid.empty() && grid.size() == measures.size(), "discretized path: grid and measures differ in length");
  require(grid.front() == 0.0 && grid.back() == 1.0, "discretized path: grid must start at 0 and end at 1");
  for (std::size_t k = 1; k < grid.size(); ++k) {
    require(grid[k] > grid[k - 1], "discretized path: grid must be strictly increasing");
  }
  for (const auto& m : measures) {
    m.validate();
  }
}

TabularMeasureField successor_measure_exact(const TabularMDP& mdp, const TabularPolicy& pi, double gamma) {
  mdp.validate();
  pi.validate(mdp.n_states, mdp.n_actions);
  require(gamma >= 0.0 && gamma < 1.0, "successor measure: gamma must lie in [0, 1)");
  const Eigen::Index sa = mdp.transition.rows();
  const Mat system = Mat::Identity(sa, sa) - gamma * state_action_kernel(mdp, pi);
  Eigen::PartialPivLU<Mat> lu(system);
  Mat values = (1.0 - gamma) * lu.solve(mdp.transition);
  return {mdp.n_states, mdp.n_actions, std::move(values)};
}

TabularMeasureField bellman_apply(const TabularMeasureField& m, const TabularMDP& mdp, const TabularPolicy& pi,
                                  double gamma) {
  require(m.n_states == mdp.n_states && m.n_actions == mdp.n_actions, "bellman_apply: shape mismatch");
  Mat values = (1.0 - gamma) * mdp.transition + gamma * (mdp.transition * (policy_matrix(mdp, pi) * m.values));
  return {m.n_states, m.n_actions, std::move(values)};
}

Mat path_smoothing_kernel(const ConditionalPath& path, double t, const Mat& embedding) {
  const Eigen::Index n = embedding.rows();
  const double a = path.alpha(t);
  const double b = path.beta(t);
  if (b < 1e-12) {
    return Mat::Identity(n, n);
  }
  Mat k(n, n);
  for (Eigen::Index x1 = 0; x1 < n; ++x1) {
    for (Eigen::Index x = 0; x < n; ++x) {
      k(x1, x) = -(embedding.row(x) - a * embedding.row(x1)).squaredNorm() / (2.0 * b * b);
    }
    const double top = k.row(x1).maxCoeff();
    k.row(x1) = (k.row(x1).array() - top).exp();
    k.row(x1) /= k.row(x1).sum();
  }
  return k;
}

DiscretizedPath path_bellman_apply(const DiscretizedPath& path, const TabularMDP& mdp, const TabularPolicy& pi,
                                   double gamma, const ConditionalPath& cond_path, const Mat& embedding) {
  require(embedding.rows() == mdp.n_states, "path_bellman_apply: embedding must have one row per state");
  DiscretizedPath out;
  out.grid = path.grid;
  out.measures.reserve(path.measures.size());
  const Mat p_pi = mdp.transition * policy_matrix(mdp, pi);
  for (std::size_t k = 0; k < path.grid.size(); ++k) {
    const Mat kernel = path_smoothing_kernel(cond_path, path.grid[k], embedding);
    Mat values = (1.0 - gamma) * (mdp.transition * kernel) + gamma * (p_pi * path.measures[k].values);
    out.measures.push_back({mdp.n_states, mdp.n_actions, std::move(values)});
  }
  return out;
}

DiscretizedPath successor_path_exact(const std::vector<double>& grid, const TabularMDP& mdp,
                                     const TabularPolicy& pi, double gamma, const ConditionalPath& cond_path,
                                     const Mat& embedding) {
  const auto m = successor_measure_exact(mdp, pi, gamma);
  DiscretizedPath out;
  out.grid = grid;
  for (const double t : grid) {
    out.measures.push_back({mdp.n_states, mdp.n_actions, m.values * path_smoothing_kernel(cond_path, t, embedding)});
  }
  return out;
}

double sup_w1(const TabularMeasureField& a, const TabularMeasureField& b, const Mat& embedding) {
  require(a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols(), "sup_w1: shape mismatch");
  double worst = 0.0;
  for (Eigen::Index r = 0; r < a.values.rows(); ++r) {
    worst = std::max(worst, wasserstein_tabular(a.values.row(r).transpose(), b.values.row(r).transpose(), embedding));
  }
  return worst;
}

double sup_w1(const DiscretizedPath& a, const DiscretizedPath& b, const Mat& embedding) {
  require(a.grid == b.grid, "sup_w1: paths use different grids");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.grid.size(); ++k) {
    worst = std::max(worst, sup_w1(a.measures[k], b.measures[k], embedding));
  }
  return worst;
}

double sup_abs_diff(const TabularMeasureField& a, const TabularMeasureField& b) {
  return (a.values - b.values).cwiseAbs().maxCoeff();
}

Mat value_exact(const TabularMDP& mdp, const TabularPolicy& pi, const Vec& reward, double gamma) {
  require(reward.size() == mdp.n_states && reward.allFinite(), "value_exact: reward must be finite with one entry per state");
  const auto m = successor_measure_exact(mdp, pi, gamma);
  const Vec q = m.values * reward / (1.0 - gamma);
  Mat out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      out(s, a) = q[mdp.row(s, a)];
    }
  }
  return out;
}

}  // namespace tdflow
