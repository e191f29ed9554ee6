#include <doctest.h>

#include "tdflow/flow.hpp"
#include "tdflow/stats.hpp"

#include <cmath>
#include <numbers>

using namespace tdflow;

namespace {

const Conditioning kNoCond{};

Vec col(double v, Eigen::Index n = 1) { return Vec::Constant(n, v); }
Mat mat1(double v) { return Mat::Constant(1, 1, v); }

FunctionField linear_field(int dim) {
  return FunctionField(
      dim, [](double, const RowVec& x, Eigen::Index) { return x; },
      [dim](double, const RowVec&, Eigen::Index) { return static_cast<double>(dim); });
}

}  // namespace

TEST_CASE("conditional path boundary conditions") {
  for (const auto kind : {PathKind::Straight, PathKind::Curved}) {
    const ConditionalPath p(kind);
    CHECK(p.alpha(0.0) == 0.0);
    CHECK(p.beta(0.0) == 1.0);
    CHECK(p.alpha(1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(p.beta(1.0)) <= 1e-15);
    Rng rng = make_rng(1);
    const Mat x0 = standard_normal(rng, 4, 2);
    const Mat x1 = standard_normal(rng, 4, 2);
    CHECK((p.sample(Vec::Zero(4), x1, x0) - x0).cwiseAbs().maxCoeff() == 0.0);
    CHECK((p.sample(Vec::Ones(4), x1, x0) - x1).cwiseAbs().maxCoeff() <= 1e-15);
  }
  const ConditionalPath curved(PathKind::Curved);
  CHECK(curved.sample(col(0.5), mat1(1.0), mat1(0.0))(0, 0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(parse_path_kind("curved") == PathKind::Curved);
  CHECK_THROWS_AS(parse_path_kind("wiggly"), ConfigError);
}

TEST_CASE("conditional velocities") {
  const ConditionalPath straight(PathKind::Straight);
  CHECK(straight.velocity_endpoint(col(0.5), mat1(1.0), mat1(2.0))(0, 0) == doctest::Approx(2.0));
  for (const double t : {0.0, 0.3, 0.9}) {
    CHECK(straight.velocity_coupled(col(t), mat1(-1.0), mat1(2.5))(0, 0) == doctest::Approx(3.5));
  }
  CHECK_THROWS_AS(straight.velocity_endpoint(col(1.0), mat1(1.0), mat1(2.0)), ConfigError);
  const ConditionalPath curved(PathKind::Curved);
  CHECK(curved.velocity_coupled(col(0.0), mat1(1.0), mat1(3.0))(0, 0) == doctest::Approx(std::numbers::pi / 2.0 * 3.0));
  CHECK_THROWS_AS(curved.velocity_endpoint(col(1.0), mat1(1.0), mat1(2.0)), ConfigError);
}

TEST_CASE("endpoint velocity is the conditional mean of the coupled velocity") {
  // With x_t = alpha x1 + beta x0, the endpoint form evaluated at x_t equals the coupled form.
  Rng rng = make_rng(2);
  for (const auto kind : {PathKind::Straight, PathKind::Curved}) {
    const ConditionalPath p(kind);
    const Mat x0 = standard_normal(rng, 5, 3);
    const Mat x1 = standard_normal(rng, 5, 3);
    const Vec t = Vec::LinSpaced(5, 0.1, 0.9);
    const Mat xt = p.sample(t, x1, x0);
    CHECK((p.velocity_endpoint(t, xt, x1) - p.velocity_coupled(t, x0, x1)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("endpoint and coupled Gaussian paths have the same marginal") {
  Rng rng = make_rng(3);
  const ConditionalPath p(PathKind::Straight);
  const int n = 10000;
  const double t = 0.6;
  const Mat x1 = standard_normal(rng, n, 1).array() * 0.5 + 2.0;
  const Mat x0 = standard_normal(rng, n, 1);
  const Mat coupled = p.sample(Vec::Constant(n, t), x1, x0);
  // Endpoint form: N(t x1, (1 - t)^2) with independent noise.
  const Mat fresh = standard_normal(rng, n, 1);
  const Mat endpoint = t * x1 + (1.0 - t) * fresh;
  std::vector<double> a(coupled.data(), coupled.data() + n), b(endpoint.data(), endpoint.data() + n);
  CHECK(ks_two_sample(a, b).p_value > 0.01);
}

TEST_CASE("ode_push on simple fields") {
  const FunctionField constant(2, [](double, const RowVec&, Eigen::Index) { return RowVec::Constant(2, 0.7); });
  const Mat x0 = (Mat(2, 2) << 1, 2, -1, 0).finished();
  const Mat out = ode_push(constant, kNoCond, x0, 0.6, {});
  CHECK((out - (x0.array() + 0.42).matrix()).cwiseAbs().maxCoeff() <= 1e-14);

  const auto lin = linear_field(2);
  const Mat e = ode_push(lin, kNoCond, x0, 1.0, {10});
  // Midpoint multiplies by 1 + h + h^2 / 2 per step.
  CHECK((e - std::pow(1.105, 10) * x0).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(ode_push(lin, kNoCond, x0, 0.0, {}), ConfigError);
}

TEST_CASE("log likelihood of the zero and scaling flows") {
  const FunctionField zero(2, [](double, const RowVec& x, Eigen::Index) { return RowVec::Zero(x.size()); },
                           [](double, const RowVec&, Eigen::Index) { return 0.0; });
  Rng rng = make_rng(4);
  const Mat x = standard_normal(rng, 5, 2);
  const auto r0 = log_likelihood(zero, kNoCond, x);
  CHECK((r0.log_prob - standard_normal_log_density(x)).cwiseAbs().maxCoeff() <= 1e-14);
  const auto at_origin = log_likelihood(zero, kNoCond, Mat::Zero(1, 3));
  CHECK(-at_origin.log_prob[0] / 3.0 == doctest::Approx(0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));

  const auto lin = linear_field(2);
  const auto r1 = log_likelihood(lin, kNoCond, x);
  const Vec expected = standard_normal_log_density(x / std::exp(1.0)).array() - 2.0;
  CHECK((r1.log_prob - expected).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("push and likelihood are inverse integrations") {
  // A smooth nonlinear field; forward then backward recovers the noise.
  const FunctionField f(2, [](double t, const RowVec& x, Eigen::Index) {
    RowVec v(2);
    v << std::sin(x[1]) + t, 0.5 * std::tanh(x[0]) - 0.3 * x[1];
    return v;
  });
  Rng rng = make_rng(5);
  const Mat x0 = standard_normal(rng, 20, 2);
  const Mat x1 = ode_push(f, kNoCond, x0, 1.0, {100});
  const auto r = log_likelihood(f, kNoCond, x1, 100);
  CHECK((r.x0 - x0).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("likelihood integrates to one in 1D") {
  const FunctionField f(1, [](double t, const RowVec& x, Eigen::Index) {
    RowVec v(1);
    v << 1.5 * std::sin(2.0 * x[0]) * t + 0.8;
    return v;
  });
  const int n = 2001;
  const Vec grid = Vec::LinSpaced(n, -8.0, 10.0);
  const auto r = log_likelihood(f, kNoCond, Mat(grid), 100);
  double integral = 0.0;
  for (int i = 1; i < n; ++i) {
    integral += 0.5 * (std::exp(r.log_prob[i]) + std::exp(r.log_prob[i - 1])) * (grid[i] - grid[i - 1]);
  }
  CHECK(integral == doctest::Approx(1.0).epsilon(0.02));
}
