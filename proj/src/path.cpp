#include "tdflow/path.hpp"

namespace tdflow {

PathKind parse_path_kind(const std::string& name) {
  if (name == "straight") {
    return PathKind::Straight;
  }
  if (name == "curved") {
    return PathKind::Curved;
  }
  throw ConfigError("unknown path kind '" + name + "' (expected straight or curved)");
}

std::string to_string(PathKind kind) { return kind == PathKind::Straight ? "straight" : "curved"; }

double ConditionalPath::endpoint_coef(double t) const {
  require(t < 1.0, "conditional velocity given X1 is singular at t = 1");
  return alpha_dot(t) - alpha(t) * beta_dot(t) / beta(t);
}

double ConditionalPath::state_coef(double t) const {
  require(t < 1.0, "conditional velocity given X1 is singular at t = 1");
  return beta_dot(t) / beta(t);
}

Mat ConditionalPath::sample(const Vec& t, const Mat& x1, const Mat& x0) const {
  require(x1.rows() == t.size() && x0.rows() == t.size() && x0.cols() == x1.cols(), "path sample: shape mismatch");
  Mat out(x1.rows(), x1.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = alpha(t[i]) * x1.row(i) + beta(t[i]) * x0.row(i);
  }
  return out;
}

Mat ConditionalPath::velocity_endpoint(const Vec& t, const Mat& x, const Mat& x1) const {
  require(x1.rows() == t.size() && x.rows() == t.size() && x.cols() == x1.cols(), "path velocity: shape mismatch");
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = endpoint_coef(t[i]) * x1.row(i) + state_coef(t[i]) * x.row(i);
  }
  return out;
}

Mat ConditionalPath::velocity_coupled(const Vec& t, const Mat& x0, const Mat& x1) const {
  require(x1.rows() == t.size() && x0.rows() == t.size() && x0.cols() == x1.cols(), "path velocity: shape mismatch");
  Mat out(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = alpha_dot(t[i]) * x1.row(i) + beta_dot(t[i]) * x0.row(i);
  }
  return out;
}

}  // namespace tdflow
