#include <doctest.h>

#include "tdflow/losses.hpp"

#include <cmath>

using namespace tdflow;

namespace {

Architecture line_arch(int dim = 1, int width = 16) {
  Architecture a;
  a.state_dim = dim;
  a.cond_state_dim = dim;
  a.action_dim = 2;
  a.width = width;
  a.n_hidden = 2;
  a.time_embed_dim = 4;
  return a;
}

VectorFieldNet make_net(const Architecture& arch, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return VectorFieldNet(arch, rng);
}

struct Fixture {
  std::shared_ptr<TabularEnv> env;
  TrajectoryDataset ds;
  std::vector<PolicyPtr> policies;
};

Fixture cycle_fixture(std::size_t n = 256) {
  Fixture f;
  Rng rng = make_rng(99);
  const TabularMDP mdp = make_random_mdp(3, 2, rng);
  f.env = std::make_shared<TabularEnv>(mdp, integer_line_embedding(3), "random3");
  const auto uniform = std::make_shared<UniformPolicy>(f.env);
  f.ds = collect_dataset(*f.env, *uniform, n, 5);
  f.policies = {uniform};
  return f;
}

void randomize(VectorFieldNet& net, std::uint64_t seed, double scale = 0.3) {
  Rng rng = make_rng(seed);
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    net.params()[i] = scale * standard_normal(rng, net.params()[i].rows(), net.params()[i].cols());
  }
}

struct Models {
  VectorFieldNet net;
  NetFlowTarget flow;
  NetNoisePredictor noise;
  DiffusionSchedule sched;
  GaussianOptimalPredictor gaussian{sched, RowVec::Constant(1, 1.0), 0.5};
  bool analytic_noise = false;

  explicit Models(VectorFieldNet n) : net(std::move(n)), flow(net, {10}), noise(net) {}
  BootstrapModel for_algorithm(Algorithm algo) const {
    BootstrapModel m;
    if (is_diffusion(algo)) {
      m.noise = analytic_noise ? static_cast<const NoisePredictor*>(&gaussian) : &noise;
      m.schedule = &sched;
    } else {
      m.flow = &flow;
    }
    return m;
  }
};

RegressionBatch build(const Fixture& f, const Models& models, Algorithm algo, double gamma, BranchMode mode,
                      std::uint64_t seed, int batch_size = 32) {
  TrainingStreams rng(seed);
  const auto batch = sample_transitions(f.ds, f.policies, false, batch_size, rng);
  TargetConfig cfg;
  cfg.algorithm = algo;
  cfg.gamma = gamma;
  cfg.branch_mode = mode;
  return sample_bellman_target(batch, cfg, models.for_algorithm(algo), rng);
}

bool same_batch(const RegressionBatch& a, const RegressionBatch& b) {
  return a.t == b.t && a.x == b.x && a.target == b.target && a.weight == b.weight && a.cond.s == b.cond.s &&
         a.cond.a == b.cond.a && a.bootstrap == b.bootstrap;
}

}  // namespace

TEST_CASE("algorithm names round trip") {
  for (const auto algo : all_algorithms()) {
    CHECK(parse_algorithm(to_string(algo)) == algo);
  }
  CHECK_THROWS_AS(parse_algorithm("td3"), ConfigError);
  CHECK(default_branch_mode(Algorithm::Td2Cfm) == BranchMode::Weighted);
  CHECK(default_branch_mode(Algorithm::TdCfm) == BranchMode::Bernoulli);
}

TEST_CASE("gamma zero collapses each family to the one-step loss bitwise") {
  const auto f = cycle_fixture();
  VectorFieldNet net = make_net(line_arch(), 1);
  randomize(net, 2);
  const Models models(net);
  VectorFieldNet learner = make_net(line_arch(), 3);
  randomize(learner, 4);

  const std::vector<Algorithm> cfm{Algorithm::TdCfm, Algorithm::TdCfmCoupled, Algorithm::Td2Cfm, Algorithm::McCfm};
  const std::vector<Algorithm> dd{Algorithm::TdDd, Algorithm::Td2Dd};
  for (const auto* family : {&cfm, &dd}) {
    const auto reference = build(f, models, family->front(), 0.0, default_branch_mode(family->front()), 7);
    const double ref_loss = regression_loss(learner, reference).total;
    CHECK(ref_loss > 0.0);
    for (const auto algo : *family) {
      for (const auto mode : {BranchMode::Bernoulli, BranchMode::Weighted}) {
        const auto batch = build(f, models, algo, 0.0, mode, 7);
        CHECK(same_batch(batch, reference));
        ModelParams g;
        CHECK(regression_loss(learner, batch, g).total == ref_loss);
      }
    }
  }
}

TEST_CASE("bootstrap through a zero target network") {
  const auto f = cycle_fixture();
  const Models models(make_net(line_arch(), 1));
  const auto batch = build(f, models, Algorithm::Td2Cfm, 0.5, BranchMode::Weighted, 8);
  TrainingStreams rng(8);
  sample_transitions(f.ds, f.policies, false, 32, rng);
  for (int i = 0; i < 32; ++i) uniform01(rng.time);
  const Mat x0 = standard_normal(rng.noise, 32, 1);
  int boot = 0;
  for (Eigen::Index i = 0; i < batch.x.rows(); ++i) {
    if (!batch.bootstrap[static_cast<std::size_t>(i)]) continue;
    CHECK(batch.x(i, 0) == x0(boot, 0));
    CHECK(batch.target(i, 0) == 0.0);
    CHECK(batch.weight[i] == 0.5);
    ++boot;
  }
  CHECK(boot == 32);

  // TD-CFM(C) with the identity flow: X1 = X0 so the coupled velocity is zero as well.
  const auto coupled = build(f, models, Algorithm::TdCfmCoupled, 0.5, BranchMode::Weighted, 8);
  for (Eigen::Index i = 32; i < coupled.x.rows(); ++i) {
    CHECK(coupled.target(i, 0) == 0.0);
  }
}

TEST_CASE("bernoulli branch frequency") {
  const auto f = cycle_fixture();
  const Models models(make_net(line_arch(1, 4), 1));
  const double gamma = 0.7;
  const int n = 100000;
  const auto batch = build(f, models, Algorithm::TdCfm, gamma, BranchMode::Bernoulli, 9, n);
  long boot = 0;
  for (const char b : batch.bootstrap) boot += b;
  CHECK(batch.x.rows() == n);
  const double freq = static_cast<double>(boot) / n;
  CHECK(std::abs(freq - gamma) <= 3.0 * std::sqrt(gamma * (1.0 - gamma) / n));
}

TEST_CASE("regression loss values") {
  VectorFieldNet net = make_net(line_arch(), 1);
  RegressionBatch b;
  b.t = Vec::Constant(1, 0.5);
  b.x = Mat::Constant(1, 1, 0.3);
  b.cond = {Mat::Zero(1, 1), Mat::Zero(1, 2), {}};
  b.target = Mat::Constant(1, 1, 2.0);
  b.weight = Vec::Ones(1);
  b.bootstrap = {0};
  b.n_source = 1;
  CHECK(regression_loss(net, b).total == 4.0);
  b.target.setZero();
  CHECK(regression_loss(net, b).total == 0.0);
}

TEST_CASE("loss gradients match finite differences for every algorithm") {
  const auto f = cycle_fixture();
  VectorFieldNet target = make_net(line_arch(1, 12), 11);
  randomize(target, 12);
  // DDIM through a random network lands far out in the tails; the analytic denoiser keeps inputs O(1).
  Models models(target);
  models.analytic_noise = true;
  for (const auto algo : all_algorithms()) {
    CAPTURE(to_string(algo));
    VectorFieldNet net = make_net(line_arch(1, 12), 13);
    randomize(net, 14);
    const auto batch = build(f, models, algo, 0.6, default_branch_mode(algo), 15, 8);
    ModelParams grads;
    regression_loss(net, batch, grads);
    const Vec analytic = grads.flatten();
    const Vec theta = net.params().flatten();
    double worst = 0.0;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      Vec tp = theta, tm = theta;
      tp[k] += 1e-5;
      tm[k] -= 1e-5;
      net.params().assign(tp);
      const double lp = regression_loss(net, batch).total;
      net.params().assign(tm);
      const double lm = regression_loss(net, batch).total;
      const double fd = (lp - lm) / 2e-5;
      worst = std::max(worst, std::abs(fd - analytic[k]) / std::max({std::abs(fd), std::abs(analytic[k]), 1e-6}));
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("training is deterministic and zero steps returns the initialization") {
  const auto f = cycle_fixture();
  Rng init_rng = make_rng(21);
  const VectorFieldNet init(line_arch(1, 8), init_rng);
  TrainConfig cfg;
  cfg.target.algorithm = Algorithm::Td2Cfm;
  cfg.target.gamma = 0.8;
  cfg.batch_size = 16;
  cfg.n_steps = 0;
  const auto none = train(f.ds, f.policies, init, cfg);
  CHECK(none.online.params() == init.params());
  CHECK(none.target.params() == init.params());
  CHECK(none.metrics.empty());

  cfg.n_steps = 5;
  cfg.optimizer.lr = 1e-2;
  const auto a = train(f.ds, f.policies, init, cfg);
  const auto b = train(f.ds, f.policies, init, cfg);
  CHECK(a.online.params() == b.online.params());
  CHECK(a.target.params() == b.target.params());
  CHECK(!(a.online.params() == init.params()));
  REQUIRE(a.metrics.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.metrics[i].loss == b.metrics[i].loss);
    CHECK(a.metrics[i].loss == doctest::Approx(a.metrics[i].one_step_loss + a.metrics[i].bootstrap_loss));
  }
  cfg.target.gamma = 1.0;
  CHECK_THROWS_AS(train(f.ds, f.policies, init, cfg), ConfigError);
}

TEST_CASE("one-step training learns the transition kernel") {
  // gamma = 0: the GHM of a 3-state MDP is P(.|s,a) itself.
  const auto f = cycle_fixture(60000);
  Rng init_rng = make_rng(31);
  Architecture arch = line_arch(1, 64);
  arch.time_embed_dim = 16;
  arch.n_hidden = 3;
  TrainConfig cfg;
  cfg.target.algorithm = Algorithm::Td2Cfm;
  cfg.target.gamma = 0.0;
  cfg.batch_size = 128;
  cfg.n_steps = 10000;
  cfg.optimizer.lr = 1e-3;
  cfg.ema_zeta = 0.999;
  const auto result = train(f.ds, f.policies, VectorFieldNet(arch, init_rng), cfg);
  const auto ghm = make_ghm(Algorithm::Td2Cfm, result.target, cfg);
  const auto& mdp = f.env->mdp();
  Rng rng = make_rng(32);
  double worst_tv = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const int n = 10000;
      Conditioning cond{Mat::Constant(n, 1, s), f.env->action(a).transpose().replicate(n, 1), {}};
      const Mat x = ghm->sample(cond, rng);
      RowVec counts = RowVec::Zero(mdp.n_states);
      for (Eigen::Index i = 0; i < n; ++i) counts[f.env->nearest_index(x.row(i).transpose())] += 1.0;
      const double tv = 0.5 * (counts / n - mdp.transition.row(mdp.row(s, a))).cwiseAbs().sum();
      worst_tv = std::max(worst_tv, tv);
    }
  }
  MESSAGE("worst total variation " << worst_tv);
  CHECK(worst_tv < 0.05);
}
