#pragma once

#include "tdflow/common.hpp"

#include <cmath>
#include <string>

namespace tdflow {

enum class PathKind { Straight, Curved };

PathKind parse_path_kind(const std::string& name);
std::string to_string(PathKind kind);

/// Affine interpolant X_t = alpha(t) X1 + beta(t) X0 between noise X0 ~ N(0, I)
/// at t = 0 and data X1 at t = 1.
class ConditionalPath {
 public:
  explicit ConditionalPath(PathKind kind = PathKind::Straight) : kind_(kind) {}

  PathKind kind() const { return kind_; }

  double alpha(double t) const { return kind_ == PathKind::Straight ? t : std::sin(kHalfPi * t); }
  double beta(double t) const { return kind_ == PathKind::Straight ? 1.0 - t : std::cos(kHalfPi * t); }
  double alpha_dot(double t) const { return kind_ == PathKind::Straight ? 1.0 : kHalfPi * std::cos(kHalfPi * t); }
  double beta_dot(double t) const { return kind_ == PathKind::Straight ? -1.0 : -kHalfPi * std::sin(kHalfPi * t); }

  /// Coefficients of u_{t|1}(x | x1) = endpoint_coef * x1 + state_coef * x. Requires t < 1.
  double endpoint_coef(double t) const;
  double state_coef(double t) const;

  /// X_t = alpha X1 + beta X0 row-wise with per-row times.
  Mat sample(const Vec& t, const Mat& x1, const Mat& x0) const;
  /// Conditional velocity given only the endpoint; throws for t >= 1.
  Mat velocity_endpoint(const Vec& t, const Mat& x, const Mat& x1) const;
  /// Conditional velocity given both endpoints: alpha_dot X1 + beta_dot X0.
  Mat velocity_coupled(const Vec& t, const Mat& x0, const Mat& x1) const;

 private:
  static constexpr double kHalfPi = 1.5707963267948966;
  PathKind kind_;
};

}  // namespace tdflow
