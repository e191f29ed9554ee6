#include "tdflow/losses.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace tdflow {

namespace {

struct AlgorithmName {
  Algorithm algo;
  const char* name;
};

constexpr AlgorithmName kAlgorithmNames[] = {
    {Algorithm::McCfm, "mc-cfm"}, {Algorithm::TdCfm, "td-cfm"}, {Algorithm::TdCfmCoupled, "td-cfm-c"},
    {Algorithm::Td2Cfm, "td2-cfm"}, {Algorithm::TdDd, "td-dd"},  {Algorithm::Td2Dd, "td2-dd"},
};

enum Stream : std::uint64_t { kBatch = 11, kPolicy, kTime, kNoise, kBranch, kBootstrap };

Mat select_rows(const Mat& m, const std::vector<Eigen::Index>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  }
  return out;
}

Vec select_rows(const Vec& v, const std::vector<Eigen::Index>& rows) {
  Vec out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  }
  return out;
}

Conditioning stack(const Conditioning& a, const Conditioning& b) {
  Conditioning out;
  out.s.resize(a.rows() + b.rows(), std::max(a.s.cols(), b.s.cols()));
  out.a.resize(a.rows() + b.rows(), std::max(a.a.cols(), b.a.cols()));
  if (a.rows() > 0) {
    out.s.topRows(a.rows()) = a.s;
    out.a.topRows(a.rows()) = a.a;
  }
  if (b.rows() > 0) {
    out.s.bottomRows(b.rows()) = b.s;
    out.a.bottomRows(b.rows()) = b.a;
  }
  out.policy = a.policy;
  out.policy.insert(out.policy.end(), b.policy.begin(), b.policy.end());
  return out;
}

Mat vstack(const Mat& a, const Mat& b, Eigen::Index cols) {
  Mat out(a.rows() + b.rows(), cols);
  if (a.rows() > 0) out.topRows(a.rows()) = a;
  if (b.rows() > 0) out.bottomRows(b.rows()) = b;
  return out;
}

Vec vstack(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

// Bootstrap-branch locations and targets for the rows in `rows`.
void bootstrap_targets(const TransitionBatch& batch, const TargetConfig& cfg, const BootstrapModel& model,
                       const std::vector<Eigen::Index>& rows, const Vec& t, const Mat& x0, TrainingStreams& rng,
                       Mat& x_out, Mat& target_out) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = batch.s_next.cols();
  const Conditioning next = batch.next.select(rows);
  const Vec tb = select_rows(t, rows);
  const Mat x0b = select_rows(x0, rows);
  const ConditionalPath path(cfg.path);

  switch (cfg.algorithm) {
    case Algorithm::TdCfm: {
      require(model.flow != nullptr, "bootstrap: flow target required");
      const Mat x1 = model.flow->push(Vec::Ones(n), standard_normal(rng.bootstrap, n, d), next);
      x_out = path.sample(tb, x1, x0b);
      target_out = path.velocity_coupled(tb, x0b, x1);
      return;
    }
    case Algorithm::TdCfmCoupled: {
      require(model.flow != nullptr, "bootstrap: flow target required");
      const Mat x1 = model.flow->push(Vec::Ones(n), x0b, next);
      x_out = path.sample(tb, x1, x0b);
      target_out = path.velocity_coupled(tb, x0b, x1);
      return;
    }
    case Algorithm::Td2Cfm:
      require(model.flow != nullptr, "bootstrap: flow target required");
      x_out = model.flow->push(tb, x0b, next);
      target_out = model.flow->velocity(tb, x_out, next);
      return;
    case Algorithm::TdDd: {
      require(model.noise != nullptr && model.schedule != nullptr, "bootstrap: noise predictor required");
      const Mat data = ddim_sample(*model.schedule, *model.noise, next, standard_normal(rng.bootstrap, n, d),
                                   cfg.ddim_steps);
      x_out = forward_kernel_sample(*model.schedule, tb, data, x0b);
      target_out = x0b;
      return;
    }
    case Algorithm::Td2Dd: {
      require(model.noise != nullptr && model.schedule != nullptr, "bootstrap: noise predictor required");
      x_out = standard_normal(rng.bootstrap, n, d);
      std::vector<Eigen::Index> inner;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (tb[i] < 1.0) inner.push_back(i);
      }
      if (!inner.empty()) {
        std::vector<Eigen::Index> source(inner.size());
        for (std::size_t k = 0; k < inner.size(); ++k) source[k] = rows[static_cast<std::size_t>(inner[k])];
        const auto m = static_cast<Eigen::Index>(inner.size());
        const Mat chained = ddim_chain(*model.schedule, *model.noise, batch.next.select(source),
                                       select_rows(x_out, inner), Vec::Ones(m), select_rows(tb, inner),
                                       cfg.ddim_steps);
        for (Eigen::Index k = 0; k < m; ++k) x_out.row(inner[static_cast<std::size_t>(k)]) = chained.row(k);
      }
      target_out = model.noise->predict(tb, x_out, next);
      return;
    }
    case Algorithm::McCfm:
      break;
  }
  throw ConfigError("bootstrap: algorithm has no bootstrap branch");
}

}  // namespace

Algorithm parse_algorithm(const std::string& name) {
  for (const auto& [algo, text] : kAlgorithmNames) {
    if (name == text) return algo;
  }
  throw ConfigError("unknown algorithm '" + name + "'");
}

std::string to_string(Algorithm algo) {
  for (const auto& [a, text] : kAlgorithmNames) {
    if (a == algo) return text;
  }
  return "unknown";
}

bool is_diffusion(Algorithm algo) { return algo == Algorithm::TdDd || algo == Algorithm::Td2Dd; }

const std::vector<Algorithm>& all_algorithms() {
  static const std::vector<Algorithm> algos{Algorithm::McCfm, Algorithm::TdCfm, Algorithm::TdCfmCoupled,
                                            Algorithm::Td2Cfm, Algorithm::TdDd,  Algorithm::Td2Dd};
  return algos;
}

BranchMode parse_branch_mode(const std::string& name) {
  if (name == "bernoulli") return BranchMode::Bernoulli;
  if (name == "weighted") return BranchMode::Weighted;
  throw ConfigError("unknown branch mode '" + name + "'");
}

std::string to_string(BranchMode mode) { return mode == BranchMode::Bernoulli ? "bernoulli" : "weighted"; }

BranchMode default_branch_mode(Algorithm algo) {
  return algo == Algorithm::Td2Cfm || algo == Algorithm::Td2Dd ? BranchMode::Weighted : BranchMode::Bernoulli;
}

TrainingStreams::TrainingStreams(std::uint64_t seed)
    : batch(make_rng(seed, kBatch)),
      policy(make_rng(seed, kPolicy)),
      time(make_rng(seed, kTime)),
      noise(make_rng(seed, kNoise)),
      branch(make_rng(seed, kBranch)),
      bootstrap(make_rng(seed, kBootstrap)) {}

TransitionBatch sample_transitions(const TrajectoryDataset& ds, const std::vector<PolicyPtr>& policies,
                                   bool policy_conditioned, int batch_size, TrainingStreams& rng) {
  require(ds.size() > 0, "sample_transitions: empty dataset");
  require(!policies.empty(), "sample_transitions: at least one policy required");
  require(batch_size >= 1, "sample_transitions: batch_size must be >= 1");
  const auto n = static_cast<double>(ds.size());
  TransitionBatch out;
  out.cond.s.resize(batch_size, ds.state_dim());
  out.cond.a.resize(batch_size, ds.action_dim());
  out.next.s.resize(batch_size, ds.state_dim());
  out.next.a.resize(batch_size, ds.action_dim());
  for (int i = 0; i < batch_size; ++i) {
    const auto k = std::min(ds.size() - 1, static_cast<std::size_t>(uniform01(rng.batch) * n));
    const auto row = static_cast<Eigen::Index>(k);
    int pid = 0;
    if (policy_conditioned) {
      pid = std::min(static_cast<int>(policies.size()) - 1,
                     static_cast<int>(uniform01(rng.policy) * static_cast<double>(policies.size())));
      out.cond.policy.push_back(pid);
      out.next.policy.push_back(pid);
    }
    out.cond.s.row(i) = ds.s.row(row);
    out.cond.a.row(i) = ds.a.row(row);
    out.next.s.row(i) = ds.s_next.row(row);
    out.next.a.row(i) = policies[static_cast<std::size_t>(pid)]->act(ds.s_next.row(row).transpose(), rng.policy).transpose();
  }
  out.s_next = out.next.s;
  return out;
}

RegressionBatch sample_bellman_target(const TransitionBatch& batch, const TargetConfig& cfg,
                                      const BootstrapModel& target, TrainingStreams& rng) {
  require(cfg.gamma >= 0.0 && cfg.gamma < 1.0, "sample_bellman_target: gamma must lie in [0, 1)");
  const Eigen::Index n = batch.s_next.rows();
  const Eigen::Index d = batch.s_next.cols();
  const bool diffusion = is_diffusion(cfg.algorithm);

  Vec t(n);
  if (diffusion) {
    require(target.schedule != nullptr, "sample_bellman_target: diffusion schedule required");
    const int steps = target.schedule->n_steps();
    for (Eigen::Index i = 0; i < n; ++i) {
      const int idx = 1 + std::min(steps - 1, static_cast<int>(uniform01(rng.time) * steps));
      t[i] = target.schedule->time_of(idx);
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i) t[i] = uniform01(rng.time) * (1.0 - cfg.t_cap);
  }
  if (cfg.fixed_t) t.setConstant(*cfg.fixed_t);
  Mat x0 = standard_normal(rng.noise, n, d);
  if (cfg.fixed_x0) {
    require(cfg.fixed_x0->size() == d, "sample_bellman_target: fixed_x0 has the wrong dimension");
    x0 = cfg.fixed_x0->replicate(n, 1);
  }
  Vec u(n);
  for (Eigen::Index i = 0; i < n; ++i) u[i] = uniform01(rng.branch);

  const bool has_bootstrap = cfg.algorithm != Algorithm::McCfm && cfg.gamma > 0.0;
  std::vector<Eigen::Index> one_rows, boot_rows;
  Vec one_w, boot_w;
  if (!has_bootstrap) {
    for (Eigen::Index i = 0; i < n; ++i) one_rows.push_back(i);
    one_w = Vec::Ones(n);
  } else if (cfg.branch_mode == BranchMode::Bernoulli) {
    for (Eigen::Index i = 0; i < n; ++i) (u[i] < cfg.gamma ? boot_rows : one_rows).push_back(i);
    one_w = Vec::Ones(static_cast<Eigen::Index>(one_rows.size()));
    boot_w = Vec::Ones(static_cast<Eigen::Index>(boot_rows.size()));
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      one_rows.push_back(i);
      boot_rows.push_back(i);
    }
    one_w = Vec::Constant(n, 1.0 - cfg.gamma);
    boot_w = Vec::Constant(n, cfg.gamma);
  }

  // One-step branch: the conditional path towards S'.
  const Vec t1 = select_rows(t, one_rows);
  const Mat s1 = select_rows(batch.s_next, one_rows);
  const Mat e1 = select_rows(x0, one_rows);
  Mat x_one, target_one;
  if (diffusion) {
    x_one = forward_kernel_sample(*target.schedule, t1, s1, e1);
    target_one = e1;
  } else {
    const ConditionalPath path(cfg.path);
    x_one = path.sample(t1, s1, e1);
    target_one = path.velocity_coupled(t1, e1, s1);
  }

  Mat x_boot(0, d), target_boot(0, d);
  if (!boot_rows.empty()) {
    bootstrap_targets(batch, cfg, target, boot_rows, t, x0, rng, x_boot, target_boot);
  }

  RegressionBatch out;
  out.t = vstack(t1, select_rows(t, boot_rows));
  out.x = vstack(x_one, x_boot, d);
  out.cond = stack(batch.cond.select(one_rows), batch.cond.select(boot_rows));
  out.target = vstack(target_one, target_boot, d);
  out.weight = vstack(one_w, boot_w);
  out.bootstrap.assign(one_rows.size(), 0);
  out.bootstrap.resize(one_rows.size() + boot_rows.size(), 1);
  out.n_source = n;
  if (!out.x.allFinite() || !out.target.allFinite()) {
    throw NumericError("sample_bellman_target: non-finite bootstrap target");
  }
  return out;
}

namespace {

LossValue split_loss(const Mat& out, const RegressionBatch& batch) {
  const double norm = 1.0 / static_cast<double>(batch.n_source * batch.target.cols());
  LossValue v;
  const Vec sq = (out - batch.target).rowwise().squaredNorm();
  for (Eigen::Index i = 0; i < sq.size(); ++i) {
    (batch.bootstrap[static_cast<std::size_t>(i)] ? v.bootstrap : v.one_step) += batch.weight[i] * sq[i] * norm;
  }
  v.total = v.one_step + v.bootstrap;
  return v;
}

}  // namespace

LossValue regression_loss(const VectorFieldNet& net, const RegressionBatch& batch, ModelParams& grads) {
  require(batch.n_source > 0, "regression_loss: empty batch");
  grads = net.params().zeros_like();
  Tape tape;
  const Var out = net.forward(tape, batch.t, batch.x, batch.cond, grads);
  const double norm = 1.0 / static_cast<double>(batch.n_source * batch.target.cols());
  const Var loss = tape.scale(tape.weighted_sq_error(out, batch.target, batch.weight), norm);
  const LossValue v = split_loss(out.value(), batch);
  if (!std::isfinite(v.total)) {
    throw NumericError("regression_loss: non-finite loss");
  }
  tape.backward(loss);
  return v;
}

LossValue regression_loss(const VectorFieldNet& net, const RegressionBatch& batch) {
  require(batch.n_source > 0, "regression_loss: empty batch");
  return split_loss(net.forward(batch.t, batch.x, batch.cond), batch);
}

void TrainConfig::validate() const {
  require(target.gamma >= 0.0 && target.gamma < 1.0, "train: gamma must lie in [0, 1)");
  require(batch_size >= 1, "train: batch_size must be >= 1");
  require(n_steps >= 0, "train: n_steps must be >= 0");
  require(ema_zeta > 0.0 && ema_zeta <= 1.0, "train: ema zeta must lie in (0, 1]");
  require(target.solver.n_steps >= 1 && target.ddim_steps >= 1, "train: solver steps must be >= 1");
  require(target.t_cap > 0.0 && target.t_cap < 1.0, "train: t_cap must lie in (0, 1)");
  require(optimizer.lr > 0.0 && optimizer.weight_decay >= 0.0, "train: invalid optimizer settings");
}

BranchMode TrainConfig::effective_branch_mode() const {
  return branch_mode.value_or(default_branch_mode(target.algorithm));
}

TrainResult train(const TrajectoryDataset& ds, const std::vector<PolicyPtr>& policies, VectorFieldNet init,
                  const TrainConfig& cfg, const std::function<void(const MetricsRow&)>& on_step) {
  cfg.validate();
  ds.validate();
  const Architecture& arch = init.arch();
  require(arch.state_dim == ds.state_dim() && arch.cond_state_dim == ds.state_dim() &&
              arch.action_dim == ds.action_dim(),
          "train: architecture does not match the dataset dimensions");
  const bool conditioned = arch.n_policies > 0;
  require(!conditioned || arch.n_policies == static_cast<int>(policies.size()),
          "train: n_policies must equal the number of policies");

  TargetConfig tcfg = cfg.target;
  tcfg.branch_mode = cfg.effective_branch_mode();

  TrainResult result{init, init, {}};
  AdamW opt(cfg.optimizer, result.online.params());
  EmaTracker ema(cfg.ema_zeta, result.online.params());
  TrainingStreams rng(cfg.seed);
  ModelParams grads;

  for (int step = 1; step <= cfg.n_steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    result.target.params() = ema.target();
    const TransitionBatch batch = sample_transitions(ds, policies, conditioned, cfg.batch_size, rng);
    BootstrapModel model;
    const NetFlowTarget flow_target(result.target, tcfg.solver);
    const NetNoisePredictor noise_target(result.target);
    if (is_diffusion(tcfg.algorithm)) {
      model.noise = &noise_target;
      model.schedule = &cfg.schedule;
    } else {
      model.flow = &flow_target;
    }
    const RegressionBatch reg = sample_bellman_target(batch, tcfg, model, rng);
    const LossValue loss = regression_loss(result.online, reg, grads);
    const double gnorm = global_norm(grads);
    opt.step(result.online.params(), grads);
    if (!result.online.params().all_finite()) {
      throw NumericError("train: parameters diverged at step " + std::to_string(step));
    }
    ema.update(result.online.params());
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    MetricsRow row{step, loss.total, loss.one_step, loss.bootstrap, gnorm, ms};
    result.metrics.push_back(row);
    if (on_step) on_step(row);
  }
  result.target.params() = ema.target();
  return result;
}

GhmPtr make_ghm(Algorithm algo, const VectorFieldNet& net, const TrainConfig& cfg) {
  if (is_diffusion(algo)) {
    return std::make_shared<DiffusionGhm>(net, cfg.schedule, cfg.target.ddim_steps);
  }
  return std::make_shared<FlowGhm>(net, cfg.target.solver);
}

}  // namespace tdflow
