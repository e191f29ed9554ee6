// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Pass criterion numbers as arguments to run a subset.

#include "tdflow/config.hpp"
#include "tdflow/experiment.hpp"
#include "tdflow/probes.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

using namespace tdflow;

namespace {

namespace tol {
constexpr double kFixedPoint = 1e-8;
constexpr double kContractionSlack = 1e-9;
constexpr double kGradientRelErr = 1e-4;
constexpr int kMaxGradientParams = 5000;
constexpr double kScalingFlowLogLik = 1e-3;
constexpr double kDiffusionNll = 5e-2;
constexpr double kConfidence = 0.95;
constexpr double kCurvedRelChange = 0.25;
constexpr double kCurvedGamma = 0.95;
constexpr double kForwardMoments = 0.02;
constexpr double kDdimMean = 0.02;
}  // namespace tol

const std::filesystem::path kConfigDir = TDFLOW_CONFIG_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string interval(const Estimate& e) {
  return fmt("%.4g", e.value) + " [" + fmt("%.4g", e.ci.lo) + ", " + fmt("%.4g", e.ci.hi) + "]";
}

// ---------------------------------------------------------------------------
// Tabular oracle

struct RandomProblem {
  TabularMDP mdp;
  TabularPolicy pi;
  double gamma = 0.0;
  Mat embedding;
};

std::vector<RandomProblem> random_problems(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<RandomProblem> out;
  for (int i = 0; i < n; ++i) {
    RandomProblem p;
    const int n_states = 2 + static_cast<int>(5.0 * uniform01(rng));  // 2..6
    const int n_actions = 1 + static_cast<int>(3.0 * uniform01(rng));
    p.gamma = 0.5 + 0.49 * uniform01(rng);
    p.mdp = make_random_mdp(n_states, n_actions, rng, p.gamma);
    p.pi = make_random_policy(n_states, n_actions, rng, uniform01(rng) < 0.5);
    p.embedding = standard_normal(rng, n_states, 2);
    out.push_back(std::move(p));
  }
  return out;
}

// Reference successor measure by summing the Neumann series term by term.
Mat neumann_successor(const TabularMDP& mdp, const TabularPolicy& pi, double gamma) {
  const int sa = mdp.n_states * mdp.n_actions;
  Mat pp = Mat::Zero(sa, sa);
  for (int r = 0; r < sa; ++r) {
    for (int x = 0; x < mdp.n_states; ++x) {
      for (int b = 0; b < mdp.n_actions; ++b) {
        pp(r, x * mdp.n_actions + b) = mdp.transition(r, x) * pi.probs(x, b);
      }
    }
  }
  Mat term = mdp.transition;
  Mat sum = term;
  for (double g = gamma; g > 1e-18; g *= gamma) {
    term = pp * term;
    sum += g * term;
  }
  return (1.0 - gamma) * sum;
}

Outcome oracle_fixed_point() {
  double worst = 0.0;
  double worst_reference = 0.0;
  int worst_iters = 0;
  for (const auto& p : random_problems(20, 101)) {
    const auto exact = successor_measure_exact(p.mdp, p.pi, p.gamma);
    worst_reference = std::max(worst_reference,
                               (exact.values - neumann_successor(p.mdp, p.pi, p.gamma)).cwiseAbs().maxCoeff());
    const int iters = static_cast<int>(std::ceil(std::log(tol::kFixedPoint) / std::log(p.gamma)));
    auto m = TabularMeasureField::uniform(p.mdp.n_states, p.mdp.n_actions);
    for (int k = 0; k < iters; ++k) m = bellman_apply(m, p.mdp, p.pi, p.gamma);
    worst = std::max(worst, sup_abs_diff(m, exact));
    worst_iters = std::max(worst_iters, iters);
  }
  return {worst <= tol::kFixedPoint && worst_reference <= 1e-12,
          "sup error " + fmt("%.3g", worst) + " after <= " + std::to_string(worst_iters) +
              " iterations; exact vs series " + fmt("%.3g", worst_reference)};
}

Outcome contraction() {
  const std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0};
  double worst_excess = -1.0;
  double worst_ratio = 0.0;
  int mdp_index = 0;
  for (const auto& p : random_problems(20, 202)) {
    Rng rng = make_rng(203, static_cast<std::uint64_t>(mdp_index));
    const ConditionalPath path(mdp_index % 2 == 0 ? PathKind::Straight : PathKind::Curved);
    ++mdp_index;
    for (int pair = 0; pair < 100; ++pair) {
      DiscretizedPath a, b;
      a.grid = b.grid = grid;
      for (std::size_t k = 0; k < grid.size(); ++k) {
        a.measures.push_back(TabularMeasureField::random(p.mdp.n_states, p.mdp.n_actions, rng));
        b.measures.push_back(TabularMeasureField::random(p.mdp.n_states, p.mdp.n_actions, rng));
      }
      const auto ta = path_bellman_apply(a, p.mdp, p.pi, p.gamma, path, p.embedding);
      const auto tb = path_bellman_apply(b, p.mdp, p.pi, p.gamma, path, p.embedding);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const double before = sup_w1(a.measures[k], b.measures[k], p.embedding);
        const double after = sup_w1(ta.measures[k], tb.measures[k], p.embedding);
        worst_excess = std::max(worst_excess, after - (p.gamma + tol::kContractionSlack) * before);
        if (before > 0.0) worst_ratio = std::max(worst_ratio, after / before / p.gamma);
      }
    }
  }
  return {worst_excess <= 0.0, "max (factor / gamma) " + fmt("%.6f", worst_ratio) + " over 20 MDPs x 100 pairs x " +
                                   std::to_string(grid.size()) + " times"};
}

// ---------------------------------------------------------------------------
// Losses

struct LossFixture {
  std::shared_ptr<TabularEnv> env;
  TrajectoryDataset ds;
  std::vector<PolicyPtr> policies;
};

LossFixture loss_fixture() {
  LossFixture f;
  Rng rng = make_rng(99);
  f.env = std::make_shared<TabularEnv>(make_random_mdp(3, 2, rng), integer_line_embedding(3), "random3");
  const auto uniform = std::make_shared<UniformPolicy>(f.env);
  f.ds = collect_dataset(*f.env, *uniform, 256, 5);
  f.policies = {uniform};
  return f;
}

Architecture small_arch(int width) {
  Architecture a;
  a.state_dim = 1;
  a.cond_state_dim = 1;
  a.action_dim = 2;
  a.width = width;
  a.n_hidden = 2;
  a.time_embed_dim = 4;
  return a;
}

VectorFieldNet random_net(const Architecture& arch, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  VectorFieldNet net(arch, rng);
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    net.params()[i] = 0.3 * standard_normal(rng, net.params()[i].rows(), net.params()[i].cols());
  }
  return net;
}

struct Bootstraps {
  VectorFieldNet net;
  NetFlowTarget flow;
  DiffusionSchedule sched;
  GaussianOptimalPredictor denoiser{sched, RowVec::Constant(1, 1.0), 0.5};

  explicit Bootstraps(VectorFieldNet n) : net(std::move(n)), flow(net, {10}) {}
  BootstrapModel for_algorithm(Algorithm algo) const {
    BootstrapModel m;
    if (is_diffusion(algo)) {
      m.noise = &denoiser;
      m.schedule = &sched;
    } else {
      m.flow = &flow;
    }
    return m;
  }
};

RegressionBatch regression_batch(const LossFixture& f, const Bootstraps& boot, Algorithm algo, double gamma,
                                 std::uint64_t seed, int batch_size) {
  TrainingStreams rng(seed);
  const auto batch = sample_transitions(f.ds, f.policies, false, batch_size, rng);
  TargetConfig cfg;
  cfg.algorithm = algo;
  cfg.gamma = gamma;
  cfg.branch_mode = default_branch_mode(algo);
  return sample_bellman_target(batch, cfg, boot.for_algorithm(algo), rng);
}

Outcome gradient_check() {
  const auto f = loss_fixture();
  const Bootstraps boot(random_net(small_arch(12), 11));
  double worst = 0.0;
  std::string worst_algo;
  Eigen::Index n_params = 0;
  for (const auto algo : all_algorithms()) {
    VectorFieldNet net = random_net(small_arch(16), 13);
    n_params = net.params().n_scalars();
    const auto batch = regression_batch(f, boot, algo, 0.6, 15, 8);
    ModelParams grads;
    regression_loss(net, batch, grads);
    const Vec analytic = grads.flatten();
    const Vec theta = net.params().flatten();
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      Vec plus = theta, minus = theta;
      plus[k] += 1e-5;
      minus[k] -= 1e-5;
      net.params().assign(plus);
      const double lp = regression_loss(net, batch).total;
      net.params().assign(minus);
      const double lm = regression_loss(net, batch).total;
      const double fd = (lp - lm) / 2e-5;
      const double err = std::abs(fd - analytic[k]) / std::max({std::abs(fd), std::abs(analytic[k]), 1e-6});
      if (err > worst) {
        worst = err;
        worst_algo = to_string(algo);
      }
    }
  }
  return {worst <= tol::kGradientRelErr && n_params <= tol::kMaxGradientParams,
          "max relative error " + fmt("%.3g", worst) + " (" + worst_algo + ") over " +
              std::to_string(all_algorithms().size()) + " losses, " + std::to_string(n_params) + " parameters"};
}

Outcome gamma_zero_equivalence() {
  const auto f = loss_fixture();
  const Bootstraps boot(random_net(small_arch(12), 2));
  const VectorFieldNet learner = random_net(small_arch(12), 4);
  const std::vector<std::vector<Algorithm>> families{
      {Algorithm::TdCfm, Algorithm::TdCfmCoupled, Algorithm::Td2Cfm}, {Algorithm::TdDd, Algorithm::Td2Dd}};
  bool identical = true;
  std::ostringstream detail;
  for (const auto& family : families) {
    const double reference = regression_loss(learner, regression_batch(f, boot, family.front(), 0.0, 7, 64)).total;
    detail << (family.front() == Algorithm::TdCfm ? "flow family " : "; diffusion family ") << fmt("%.17g", reference);
    for (const auto algo : family) {
      ModelParams g;
      const double loss = regression_loss(learner, regression_batch(f, boot, algo, 0.0, 7, 64), g).total;
      identical = identical && loss == reference && reference > 0.0;
    }
  }
  return {identical, detail.str() + (identical ? " (bitwise equal within each family)" : " (mismatch)")};
}

// ---------------------------------------------------------------------------
// Likelihoods and diffusion


// Dataset whose transitions all start at the origin and land on `samples`.
struct StaticTarget {
  std::shared_ptr<TabularEnv> env;
  TrajectoryDataset ds;
  std::vector<PolicyPtr> policies;
};

StaticTarget static_target(const Mat& samples) {
  StaticTarget t;
  t.env = std::make_shared<TabularEnv>(make_cycle(1), Mat::Zero(1, samples.cols()));
  t.ds.env_id = "static";
  t.ds.s = Mat::Zero(samples.rows(), samples.cols());
  t.ds.a = Mat::Ones(samples.rows(), 1);
  t.ds.s_next = samples;
  t.policies = {std::make_shared<UniformPolicy>(t.env)};
  return t;
}

Outcome likelihoods() {
  const int dim = 2;
  const FunctionField scaling(
      dim, [](double, const RowVec& x, Eigen::Index) { return x; },
      [](double, const RowVec&, Eigen::Index) { return static_cast<double>(dim); });
  Rng rng = make_rng(401);
  const Mat x = 2.0 * standard_normal(rng, 64, dim);
  const Vec closed_form = standard_normal_log_density(x / std::numbers::e).array() - dim;
  const double flow_err = (log_likelihood(scaling, {}, x).log_prob - closed_form).cwiseAbs().maxCoeff();

  const double mu = 1.0;
  const double sd = 0.5;
  const Mat data = Mat::Constant(20000, 1, mu) + sd * standard_normal(rng, 20000, 1);
  const auto target = static_target(data);
  TrainConfig cfg;
  cfg.target.algorithm = Algorithm::Td2Dd;
  cfg.target.gamma = 0.0;
  cfg.batch_size = 256;
  cfg.n_steps = 8000;
  cfg.optimizer.lr = 1e-3;
  cfg.seed = 402;
  Architecture arch;
  arch.state_dim = arch.cond_state_dim = 1;
  arch.action_dim = 1;
  arch.width = 64;
  arch.n_hidden = 2;
  arch.time_embed_dim = 16;
  Rng init = make_rng(403);
  const auto result = train(target.ds, target.policies, VectorFieldNet(arch, init), cfg);
  const auto ghm = make_ghm(Algorithm::Td2Dd, result.target, cfg);
  const int n = 2000;
  const Mat eval_x = Mat::Constant(n, 1, mu) + sd * standard_normal(rng, n, 1);
  const Conditioning origin{Mat::Zero(n, 1), Mat::Ones(n, 1), {}};
  const double model_nll = -ghm->log_prob(origin, eval_x).mean();
  double true_nll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = (eval_x(i, 0) - mu) / sd;
    true_nll += 0.5 * z * z + std::log(sd) + 0.5 * std::log(2.0 * std::numbers::pi);
  }
  true_nll /= n;
  const double nll_err = std::abs(model_nll - true_nll);
  return {flow_err <= tol::kScalingFlowLogLik && nll_err <= tol::kDiffusionNll,
          "scaling flow max error " + fmt("%.3g", flow_err) + "; diffusion NLL " + fmt("%.4f", model_nll) +
              " vs analytic " + fmt("%.4f", true_nll)};
}

Outcome diffusion_sanity() {
  const DiffusionSchedule sched;
  Rng rng = make_rng(1101);
  double worst_kernel = 0.0;
  const int n = 200000;
  const double x0 = 2.0;
  for (const double t : {0.05, 0.1, 0.2, 0.3}) {
    const Mat xt = forward_kernel_sample(sched, Vec::Constant(n, t), Mat::Constant(n, 1, x0),
                                         standard_normal(rng, n, 1));
    const double m = xt.mean();
    const double sdev = std::sqrt((xt.array() - m).square().sum() / (n - 1));
    worst_kernel = std::max({worst_kernel, std::abs(m / (x0 * sched.alpha(t)) - 1.0),
                             std::abs(sdev / sched.sigma(t) - 1.0)});
  }
  // The discrete chain x_i = sqrt(1 - beta_i) x_{i-1} + sqrt(beta_i) eps run step by step.
  const int chain = 20000;
  const int stop = 300;
  Vec x = Vec::Constant(chain, x0);
  for (int i = 1; i <= stop; ++i) {
    const double b = sched.discrete_betas()[i];
    x = std::sqrt(1.0 - b) * x + std::sqrt(b) * Vec(standard_normal(rng, chain, 1));
  }
  const double t_stop = sched.time_of(stop);
  const double cm = x.mean();
  const double csd = std::sqrt((x.array() - cm).square().sum() / (chain - 1));
  const double worst_chain =
      std::max(std::abs(cm / (x0 * sched.alpha(t_stop)) - 1.0), std::abs(csd / sched.sigma(t_stop) - 1.0));

  RowVec mu(2);
  mu << 1.5, -0.5;
  const GaussianOptimalPredictor eps(sched, mu, 0.4);
  const Mat samples = ddim_sample(sched, eps, {}, standard_normal(rng, 20000, 2), 20);
  const RowVec sample_mean = samples.colwise().mean();
  const double ddim_err = ((sample_mean - mu).array() / mu.array().abs()).abs().maxCoeff();
  return {worst_kernel <= tol::kForwardMoments && worst_chain <= tol::kForwardMoments && ddim_err <= tol::kDdimMean,
          "forward kernel moments rel err " + fmt("%.3g", worst_kernel) + ", discrete chain " +
              fmt("%.3g", worst_chain) + "; 20-step DDIM mean rel err " + fmt("%.3g", ddim_err)};
}

// ---------------------------------------------------------------------------
// Gradient variance

Outcome variance_ordering() {
  const auto env = std::make_shared<TabularEnv>(make_cycle(4), integer_line_embedding(4), "cycle");
  const auto uniform = std::make_shared<UniformPolicy>(env);
  const auto ds = collect_dataset(*env, *uniform, 512, 501);
  const AnalyticFlowTarget frozen(AnalyticFlowTarget::Kind::StraightAffine, 1, 0.5, RowVec::Constant(1, 0.5));
  BootstrapModel model;
  model.flow = &frozen;
  Architecture arch;
  arch.state_dim = arch.cond_state_dim = arch.action_dim = 1;
  arch.width = 8;
  arch.n_hidden = 1;
  arch.time_embed_dim = 4;
  VectorFieldNet net = random_net(arch, 502);
  VarianceProbeConfig cfg;
  cfg.gamma = 0.99;
  cfg.n_samples = 10000;
  cfg.level = tol::kConfidence;
  cfg.seed = 503;
  const auto report = gradient_variance_probe(net, ds, {uniform}, model,
                                              {Algorithm::Td2Cfm, Algorithm::TdCfmCoupled, Algorithm::TdCfm}, cfg);
  const Estimate coupled_minus_td2 = report[1].minus_earlier[0];
  const Estimate td_minus_td2 = report[2].minus_earlier[0];
  return {td_minus_td2.ci.lo > 0.0 && coupled_minus_td2.ci.contains(0.0),
          "Tr Cov TD-CFM minus TD2-CFM " + interval(td_minus_td2) + "; TD-CFM(C) minus TD2-CFM " +
              interval(coupled_minus_td2)};
}

// ---------------------------------------------------------------------------
// Pointmass experiments

struct TrainedModel {
  VectorFieldNet target;
  TrainConfig train;
  GhmPtr ghm;
  EvalReport report;
};

class PointmassBench {
 public:
  PointmassBench() : cfg_(load_run_config(kConfigDir / "pointmass_sweep.json")), exp_(build_experiment(cfg_)) {
    arch_ = build_architecture(exp_, cfg_);
  }

  const RunConfig& config() const { return cfg_; }
  const Experiment& experiment() const { return exp_; }

  const TrainedModel& get(Algorithm algo, double gamma, PathKind path) {
    const auto key = std::make_tuple(algo, gamma, path);
    if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
    const auto start = std::chrono::steady_clock::now();
    RunConfig run = cfg_;
    run.train.algorithm = algo;
    run.train.gamma = gamma;
    run.train.path = path;
    TrainedModel m;
    m.train = make_train_config(run, run.seed);
    const auto ds = build_dataset(exp_, run, algo, gamma);
    Rng init = make_rng(mix_seed(run.seed, 12));
    m.target = train(ds, exp_.library.policies, VectorFieldNet(arch_, init), m.train).target;
    m.ghm = make_ghm(algo, m.target, m.train);
    EvalProtocolCfg protocol = run.eval.protocol;
    protocol.gamma = gamma;
    EvalMetrics metrics;
    metrics.nll = false;
    m.report = evaluate(*m.ghm, *exp_.env, eval_policy(exp_, protocol), exp_.reward, protocol, run.seed, metrics);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "  trained " << to_string(algo) << " gamma " << gamma << ' ' << to_string(path) << ": mse_v "
              << m.report.mse_v << " emd " << m.report.emd << " (" << fmt("%.0f", secs) << " s)\n";
    return cache_.emplace(key, std::move(m)).first->second;
  }

 private:
  RunConfig cfg_;
  Experiment exp_;
  Architecture arch_;
  std::map<std::tuple<Algorithm, double, PathKind>, TrainedModel> cache_;
};

PointmassBench& bench() {
  static PointmassBench instance;
  return instance;
}

Outcome transport_ordering() {
  auto& b = bench();
  const double gamma = 0.99;
  const auto& m = b.get(Algorithm::Td2Cfm, gamma, PathKind::Straight);
  const NetFlowTarget frozen(m.target, m.train.target.solver);
  const auto ds = build_dataset(b.experiment(), b.config(), Algorithm::Td2Cfm, gamma);
  const auto r = transport_cost_probe(frozen, ds, b.experiment().library.policies, gamma, 10000, 200,
                                      tol::kConfidence, 601);
  return {r.difference.ci.lo > 0.0, "coupled " + interval(r.coupled) + ", independent " + interval(r.independent) +
                                        ", independent minus coupled " + interval(r.difference)};
}

std::vector<double> squared_errors(const EvalReport& r) {
  std::vector<double> out;
  for (const auto& s : r.per_state) out.push_back((s.v_model - s.v_true) * (s.v_model - s.v_true));
  return out;
}

double mean_of(const std::vector<double>& xs, const std::vector<std::size_t>& idx) {
  double acc = 0.0;
  for (const auto i : idx) acc += xs[i];
  return acc / static_cast<double>(idx.size());
}

Outcome gamma_sweep_trend() {
  auto& b = bench();
  const auto& gammas = b.config().sweep.gammas;
  std::vector<std::vector<double>> td, td2;
  for (const double g : gammas) {
    td.push_back(squared_errors(b.get(Algorithm::TdCfm, g, PathKind::Straight).report));
    td2.push_back(squared_errors(b.get(Algorithm::Td2Cfm, g, PathKind::Straight).report));
  }
  const std::size_t n_src = td.front().size();
  std::vector<std::size_t> all(n_src);
  for (std::size_t i = 0; i < n_src; ++i) all[i] = i;
  const auto ratios = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> r;
    for (std::size_t k = 0; k < gammas.size(); ++k) r.push_back(mean_of(td[k], idx) / mean_of(td2[k], idx));
    return r;
  };
  const auto point = ratios(all);

  // Sources are shared by every run, so one resample of source indices pairs all of them.
  const int n_boot = 2000;
  Rng rng = make_rng(701);
  std::vector<std::vector<double>> steps(gammas.size() - 1);
  std::vector<double> last_gap;
  for (int rep = 0; rep < n_boot; ++rep) {
    std::vector<std::size_t> idx(n_src);
    for (auto& i : idx) i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n_src)) % n_src;
    const auto r = ratios(idx);
    for (std::size_t k = 0; k + 1 < r.size(); ++k) steps[k].push_back(r[k + 1] - r[k]);
    last_gap.push_back(mean_of(td2.back(), idx) - mean_of(td.back(), idx));
  }
  bool monotone = true;
  std::ostringstream detail;
  detail << "MSE(V) at gamma " << gammas.back() << ": TD-CFM " << fmt("%.4g", mean_of(td.back(), all))
         << ", TD2-CFM " << fmt("%.4g", mean_of(td2.back(), all)) << "; ratio by gamma";
  for (std::size_t k = 0; k < point.size(); ++k) detail << ' ' << fmt("%.3g", point[k]);
  for (std::size_t k = 0; k + 1 < point.size(); ++k) {
    const auto ci = percentile_interval(steps[k], tol::kConfidence);
    if (ci.hi < 0.0) monotone = false;
    if (point[k + 1] < point[k]) {
      detail << "; drop " << gammas[k] << "->" << gammas[k + 1] << " CI [" << fmt("%.3g", ci.lo) << ", "
             << fmt("%.3g", ci.hi) << "]";
    }
  }
  const auto gap = percentile_interval(last_gap, tol::kConfidence);
  detail << "; TD2 minus TD at top gamma CI [" << fmt("%.4g", gap.lo) << ", " << fmt("%.4g", gap.hi) << "]";
  const bool lower = mean_of(td2.back(), all) < mean_of(td.back(), all);
  return {lower && monotone, detail.str()};
}

Outcome curved_path_robustness() {
  auto& b = bench();
  const double gamma = tol::kCurvedGamma;
  const auto emd = [&](Algorithm algo, PathKind path) { return b.get(algo, gamma, path).report.emd; };
  const double c_straight = emd(Algorithm::TdCfmCoupled, PathKind::Straight);
  const double c_curved = emd(Algorithm::TdCfmCoupled, PathKind::Curved);
  const double td2_straight = emd(Algorithm::Td2Cfm, PathKind::Straight);
  const double td2_curved = emd(Algorithm::Td2Cfm, PathKind::Curved);
  const double td2_change = std::abs(td2_curved - td2_straight) / td2_straight;
  return {c_curved > c_straight && td2_change < tol::kCurvedRelChange,
          "EMD at gamma " + fmt("%g", gamma) + ": TD-CFM(C) " + fmt("%.4g", c_straight) + " -> " +
              fmt("%.4g", c_curved) + ", TD2-CFM " + fmt("%.4g", td2_straight) + " -> " + fmt("%.4g", td2_curved) +
              " (" + fmt("%.1f", 100.0 * td2_change) + "% change)"};
}

// ---------------------------------------------------------------------------
// Planning

Outcome gpi_improvement() {
  const auto cfg = load_run_config(kConfigDir / "gridworld_gpi.json");
  const auto exp = build_experiment(cfg);
  const auto arch = build_architecture(exp, cfg);
  const auto tc = make_train_config(cfg, cfg.seed);
  const auto ds = build_dataset(exp, cfg, cfg.train.algorithm, cfg.train.gamma);
  Rng init = make_rng(mix_seed(cfg.seed, 12));
  const auto result = train(ds, exp.library.policies, VectorFieldNet(arch, init), tc);
  const auto ghm = make_ghm(cfg.train.algorithm, result.target, tc);
  GpiCfg gc;
  gc.gamma = cfg.train.gamma;
  gc.n_ghm_samples = cfg.plan.n_ghm_samples;
  const auto q = ghm_q_function(*ghm, exp.library, exp.reward, gc);
  const auto r = evaluate_gpi(*exp.env, q, exp.library, exp.reward, cfg.plan.episodes, cfg.plan.length, cfg.seed);
  std::size_t best = 0;
  for (std::size_t w = 1; w < r.base.size(); ++w) {
    if (r.base[w].value > r.base[best].value) best = w;
  }
  const double margin = r.base[best].value - r.base[best].ci.lo;
  std::ostringstream detail;
  detail << "GPI " << interval(r.gpi) << " over " << cfg.plan.episodes << " episodes";
  for (std::size_t w = 0; w < r.base.size(); ++w) detail << "; " << exp.library.names[w] << ' ' << interval(r.base[w]);
  return {r.gpi.value >= r.base[best].value - margin, detail.str()};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "oracle fixed point", oracle_fixed_point},
      {2, "path Bellman contraction", contraction},
      {3, "loss gradients", gradient_check},
      {4, "likelihoods", likelihoods},
      {5, "gradient variance ordering", variance_ordering},
      {6, "transport cost ordering", transport_ordering},
      {7, "gamma sweep trend", gamma_sweep_trend},
      {8, "curved path robustness", curved_path_robustness},
      {9, "gamma zero equivalence", gamma_zero_equivalence},
      {10, "GPI improvement", gpi_improvement},
      {11, "DDPM/DDIM sanity", diffusion_sanity},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!outcome.pass) ++failures;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << outcome.detail << " ("
              << fmt("%.1f", secs) << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
