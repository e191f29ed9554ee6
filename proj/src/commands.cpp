#include "tdflow/commands.hpp"

#include "tdflow/experiment.hpp"
#include "tdflow/probes.hpp"
#include "tdflow/report.hpp"

#include <json.hpp>

#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

namespace tdflow {

namespace {

using nlohmann::json;

struct RunContext {
  CommandOptions options;
  RunConfig cfg;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  RunManifest manifest;

  std::filesystem::path artifact(const std::string& key, const std::string& file) {
    manifest.artifacts[key] = file;
    return dir / file;
  }
};

std::ostringstream csv_stream() {
  std::ostringstream os;
  os.precision(10);
  return os;
}

std::filesystem::path output_root(const CommandOptions& o, const RunConfig& cfg) {
  if (o.out) return *o.out;
  if (const char* env = std::getenv("TDFLOW_OUT"); env != nullptr && *env != '\0') return env;
  if (cfg.out_dir) return *cfg.out_dir;
  return "runs";
}

Checkpoint required_checkpoint(const RunContext& ctx, const Architecture& arch) {
  const auto path = ctx.options.checkpoint ? ctx.options.checkpoint : ctx.cfg.checkpoint;
  require(path.has_value(), "config: " + ctx.options.command + " needs a checkpoint");
  return load_checkpoint(*path, arch);
}

double checkpoint_gamma(const Checkpoint& ck, double fallback) {
  const auto m = json::parse(ck.metadata_json);
  return m.value("gamma", fallback);
}

const RewardFn& required_reward(const Experiment& exp, const std::string& command) {
  require(static_cast<bool>(exp.reward), "config: " + command + " needs a reward section");
  return exp.reward;
}

VectorFieldNet init_net(const RunContext& ctx, const Architecture& arch) {
  Rng rng = make_rng(ctx.cfg.model.init_seed.value_or(mix_seed(ctx.seed, 12)));
  return VectorFieldNet(arch, rng);
}

void write_estimates(const std::filesystem::path& path, const std::vector<std::pair<std::string, Estimate>>& rows) {
  auto os = csv_stream();
  os << "quantity,estimate,lo,hi\n";
  for (const auto& [name, e] : rows) os << name << ',' << e.value << ',' << e.ci.lo << ',' << e.ci.hi << '\n';
  write_text_atomic(path, os.str());
}

void cmd_train(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto exp = build_experiment(cfg);
  const auto ds = build_dataset(exp, cfg, cfg.train.algorithm, cfg.train.gamma);
  const auto arch = build_architecture(exp, cfg);
  const auto tc = make_train_config(cfg, ctx.seed);
  const auto result = train(ds, exp.library.policies, init_net(ctx, arch), tc);

  Checkpoint ck;
  ck.arch = arch;
  ck.metadata_json = checkpoint_metadata(cfg, cfg.train.algorithm, cfg.train.gamma);
  ck.step = tc.n_steps;
  ck.online = result.online.params();
  ck.target = result.target.params();
  save_checkpoint(ck, ctx.artifact("checkpoint", "model.ckpt"));
  write_metrics_csv(result.metrics, ctx.artifact("metrics", "metrics.csv"), cfg.train.log_every);
}

void cmd_eval(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto exp = build_experiment(cfg);
  const auto arch = build_architecture(exp, cfg);
  const auto ck = required_checkpoint(ctx, arch);
  const auto model = ghm_from_checkpoint(ck);

  EvalProtocolCfg protocol = cfg.eval.protocol;
  protocol.gamma = checkpoint_gamma(ck, cfg.train.gamma);
  if (arch.n_policies > 0 && protocol.policy_index < 0) protocol.policy_index = 0;
  EvalMetrics metrics;
  metrics.nll = cfg.eval.nll && model->has_likelihood();
  metrics.mse_v = static_cast<bool>(exp.reward);
  const RewardFn reward = exp.reward ? exp.reward : RewardFn([](const Vec&) { return 0.0; });
  const auto report = evaluate(*model, *exp.env, eval_policy(exp, protocol), reward, protocol, ctx.seed, metrics);
  write_text_atomic(ctx.artifact("report_json", "eval.json"), eval_report_json(report) + "\n");
  write_eval_csv(report, ctx.artifact("report_csv", "eval.csv"));
}

void cmd_gamma_sweep(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto exp = build_experiment(cfg);
  const auto& reward = required_reward(exp, "gamma-sweep");
  const auto arch = build_architecture(exp, cfg);
  const Policy& policy = eval_policy(exp, cfg.eval.protocol);

  const auto rows = gamma_sweep(cfg.sweep.algorithms, cfg.sweep.gammas, [&](Algorithm algo, double gamma) {
    RunConfig run = cfg;
    run.train.algorithm = algo;
    run.train.gamma = gamma;
    const auto ds = build_dataset(exp, run, algo, gamma);
    const auto tc = make_train_config(run, ctx.seed);
    const auto result = train(ds, exp.library.policies, init_net(ctx, arch), tc);
    const auto model = make_ghm(algo, result.target, tc);
    EvalProtocolCfg protocol = run.eval.protocol;
    protocol.gamma = gamma;
    if (arch.n_policies > 0 && protocol.policy_index < 0) protocol.policy_index = 0;
    EvalMetrics metrics;
    metrics.nll = run.eval.nll && model->has_likelihood();
    return evaluate(*model, *exp.env, policy, reward, protocol, ctx.seed, metrics);
  });
  write_sweep_csv(rows, ctx.artifact("sweep", "sweep.csv"));
}

// Frozen previous iterate for the probes: an analytic flow or a checkpoint's target network.
struct FrozenModel {
  std::optional<VectorFieldNet> net;
  std::unique_ptr<FlowTarget> flow;
  std::unique_ptr<NetNoisePredictor> noise;
  DiffusionSchedule schedule;
  bool diffusion = false;

  BootstrapModel view() const {
    BootstrapModel m;
    if (diffusion) {
      m.noise = noise.get();
      m.schedule = &schedule;
    } else {
      m.flow = flow.get();
    }
    return m;
  }
};

void build_frozen(const RunContext& ctx, const Experiment& exp, const std::optional<Checkpoint>& ck,
                  FrozenModel& frozen) {
  const auto& f = ctx.cfg.probe.frozen;
  if (f.kind == "checkpoint") {
    require(ck.has_value(), "config: probe.frozen.kind checkpoint needs a checkpoint");
    const auto meta = json::parse(ck->metadata_json);
    frozen.diffusion = is_diffusion(parse_algorithm(meta.value("algorithm", std::string("td2-cfm"))));
    frozen.net.emplace(ck->arch, ck->target);
    if (frozen.diffusion) {
      frozen.noise = std::make_unique<NetNoisePredictor>(*frozen.net);
    } else {
      frozen.flow = std::make_unique<NetFlowTarget>(*frozen.net, OdeSolverCfg{meta.value("ode_steps", 10)});
    }
    return;
  }
  const int dim = exp.env->state_dim();
  RowVec offset = RowVec::Zero(dim);
  if (!f.offset.empty()) {
    require(static_cast<int>(f.offset.size()) == dim, "config: probe.frozen.offset must match the state dimension");
    for (int k = 0; k < dim; ++k) offset[k] = f.offset[static_cast<std::size_t>(k)];
  }
  const auto kind = f.kind == "gaussian_marginal" ? AnalyticFlowTarget::Kind::GaussianMarginal
                                                  : AnalyticFlowTarget::Kind::StraightAffine;
  frozen.flow = std::make_unique<AnalyticFlowTarget>(kind, dim, f.scale, offset);
}

std::optional<Checkpoint> optional_checkpoint(const RunContext& ctx, const Architecture& arch) {
  const auto path = ctx.options.checkpoint ? ctx.options.checkpoint : ctx.cfg.checkpoint;
  if (!path) return std::nullopt;
  return load_checkpoint(*path, arch);
}

void cmd_variance_probe(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto exp = build_experiment(cfg);
  const auto arch = build_architecture(exp, cfg);
  const auto ck = optional_checkpoint(ctx, arch);
  FrozenModel frozen;
  build_frozen(ctx, exp, ck, frozen);
  for (const auto algo : cfg.probe.algorithms) {
    require(is_diffusion(algo) == frozen.diffusion,
            "config: probe algorithm " + to_string(algo) + " does not match the frozen model family");
  }
  const VectorFieldNet net = ck ? VectorFieldNet(ck->arch, ck->online) : init_net(ctx, arch);
  const auto ds = build_dataset(exp, cfg, Algorithm::TdCfm, cfg.probe.gamma);

  VarianceProbeConfig pc;
  pc.gamma = cfg.probe.gamma;
  pc.path = cfg.train.path;
  pc.n_samples = cfg.probe.n_samples;
  pc.n_boot = cfg.probe.n_boot;
  pc.seed = ctx.seed;
  const auto reports = gradient_variance_probe(net, ds, exp.library.policies, frozen.view(), cfg.probe.algorithms, pc);

  std::vector<std::pair<std::string, Estimate>> rows;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto name = to_string(reports[i].algorithm);
    rows.emplace_back("trace_cov:" + name, reports[i].trace_cov);
    for (std::size_t k = 0; k < reports[i].minus_earlier.size(); ++k) {
      rows.emplace_back("difference:" + name + "-" + to_string(reports[k].algorithm), reports[i].minus_earlier[k]);
    }
  }
  write_estimates(ctx.artifact("variance", "variance.csv"), rows);
}

void cmd_transport_probe(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto exp = build_experiment(cfg);
  const auto arch = build_architecture(exp, cfg);
  const auto ck = optional_checkpoint(ctx, arch);
  FrozenModel frozen;
  build_frozen(ctx, exp, ck, frozen);
  require(!frozen.diffusion, "config: transport-probe needs a flow model");
  const auto ds = build_dataset(exp, cfg, Algorithm::TdCfm, cfg.probe.gamma);
  const auto r = transport_cost_probe(*frozen.flow, ds, exp.library.policies, cfg.probe.gamma, cfg.probe.n_samples,
                                      cfg.probe.n_boot, 0.95, ctx.seed);
  write_estimates(ctx.artifact("transport", "transport.csv"),
                  {{"coupled", r.coupled}, {"independent", r.independent}, {"independent_minus_coupled", r.difference}});
}

void cmd_plan(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto exp = build_experiment(cfg);
  const auto& reward = required_reward(exp, "plan");
  const auto arch = build_architecture(exp, cfg);

  QFunction q;
  GhmPtr model;
  GpiCfg gc;
  gc.n_ghm_samples = cfg.plan.n_ghm_samples;
  if (cfg.plan.q_source == "oracle") {
    require(exp.tabular && !exp.tables.empty(), "config: plan.q_source oracle needs tabular env and policies");
    gc.gamma = cfg.train.gamma;
    q = exact_q_function(exp.tabular, exp.tables, reward_table(*exp.tabular, reward), gc.gamma);
  } else {
    const auto ck = required_checkpoint(ctx, arch);
    require(exp.library.size() == 1 || ck.arch.n_policies == static_cast<int>(exp.library.size()),
            "config: plan needs a model conditioned on every library policy");
    gc.gamma = checkpoint_gamma(ck, cfg.train.gamma);
    model = ghm_from_checkpoint(ck);
    q = ghm_q_function(*model, exp.library, reward, gc);
  }
  const auto result = evaluate_gpi(*exp.env, q, exp.library, reward, cfg.plan.episodes, cfg.plan.length, ctx.seed);
  std::vector<std::pair<std::string, Estimate>> rows;
  for (std::size_t w = 0; w < exp.library.size(); ++w) rows.emplace_back(exp.library.names[w], result.base[w]);
  rows.emplace_back("gpi", result.gpi);
  auto os = csv_stream();
  os << "policy,mean_return,lo,hi\n";
  for (const auto& [name, e] : rows) os << name << ',' << e.value << ',' << e.ci.lo << ',' << e.ci.hi << '\n';
  write_text_atomic(ctx.artifact("returns", "plan.csv"), os.str());
}

void cmd_oracle(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto exp = build_experiment(cfg);
  require(exp.tabular && !exp.tables.empty(), "config: oracle needs a tabular environment and tabular policies");
  const auto& env = *exp.tabular;
  const double gamma = cfg.oracle.gamma.value_or(cfg.train.gamma);
  const auto& mdp = env.mdp();

  auto measure = csv_stream();
  auto convergence = csv_stream();
  auto values = csv_stream();
  measure << "policy,s,a,x,mass\n";
  convergence << "policy,iteration,sup_abs_error,sup_w1\n";
  values << "policy,s,a,q\n";
  for (std::size_t w = 0; w < exp.tables.size(); ++w) {
    const auto& name = exp.library.names[w];
    const auto& pi = exp.tables[w];
    const auto m = successor_measure_exact(mdp, pi, gamma);
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int a = 0; a < mdp.n_actions; ++a) {
        for (int x = 0; x < mdp.n_states; ++x) {
          measure << name << ',' << s << ',' << a << ',' << x << ',' << m.slice(s, a)[x] << '\n';
        }
      }
    }
    auto iterate = TabularMeasureField::uniform(mdp.n_states, mdp.n_actions);
    for (int k = 0; k <= cfg.oracle.iterations; ++k) {
      convergence << name << ',' << k << ',' << sup_abs_diff(iterate, m) << ','
                  << sup_w1(iterate, m, env.embedding()) << '\n';
      iterate = bellman_apply(iterate, mdp, pi, gamma);
    }
    if (exp.reward) {
      const Mat q = value_exact(mdp, pi, reward_table(env, exp.reward), gamma);
      for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) values << name << ',' << s << ',' << a << ',' << q(s, a) << '\n';
      }
    }
  }
  write_text_atomic(ctx.artifact("successor_measure", "successor.csv"), measure.str());
  write_text_atomic(ctx.artifact("convergence", "convergence.csv"), convergence.str());
  if (exp.reward) write_text_atomic(ctx.artifact("values", "values.csv"), values.str());
}

void cmd_plot(RunContext& ctx) {
  require(ctx.cfg.plot.has_value(), "config: plot needs a plot section");
  const auto table = read_csv(ctx.cfg.plot->csv);
  write_text_atomic(ctx.artifact("figure", "plot.svg"), render_svg(table, *ctx.cfg.plot));
}

using Handler = std::function<void(RunContext&)>;

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table = {
      {"train", cmd_train},   {"eval", cmd_eval},     {"gamma-sweep", cmd_gamma_sweep},
      {"variance-probe", cmd_variance_probe},         {"transport-probe", cmd_transport_probe},
      {"plan", cmd_plan},     {"oracle", cmd_oracle}, {"plot", cmd_plot},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"train", "eval",   "gamma-sweep", "variance-probe",
                                                 "transport-probe", "plan", "oracle", "plot"};
  return names;
}

std::filesystem::path run_command(const CommandOptions& options) {
  const auto it = handlers().find(options.command);
  require(it != handlers().end(), "unknown command " + options.command);

  RunContext ctx;
  ctx.options = options;
  ctx.cfg = load_run_config(options.config);
  if (options.steps) {
    require(options.command == "train", "--steps applies to train only");
    require(*options.steps >= 0, "--steps must be non-negative");
    ctx.cfg.train.steps = *options.steps;
  }
  if (options.input) {
    require(options.command == "plot", "--input applies to plot only");
    require(ctx.cfg.plot.has_value(), "config: plot needs a plot section");
    ctx.cfg.plot->csv = *options.input;
  }
  ctx.seed = options.seed.value_or(ctx.cfg.seed);

  std::string identity = ctx.cfg.canonical_json + "|" + std::to_string(ctx.seed);
  if (options.steps) identity += "|steps=" + std::to_string(*options.steps);
  if (options.checkpoint) identity += "|ckpt=" + options.checkpoint->string();
  if (options.input) identity += "|input=" + options.input->string();
  const auto hash = content_hash(identity);
  ctx.dir = create_run_dir(output_root(options, ctx.cfg),
                           ctx.cfg.name + "-" + options.command + "-s" + std::to_string(ctx.seed) + "-" +
                               hash.substr(0, 8));

  auto& m = ctx.manifest;
  m.command = options.command;
  m.config_hash = content_hash(ctx.cfg.canonical_json);
  m.code_version = code_version();
  m.seed = ctx.seed;
  m.started = utc_timestamp();
  m.artifacts["config"] = "config.json";
  write_text_atomic(ctx.dir / "config.json", json::parse(ctx.cfg.canonical_json).dump(2) + "\n");
  m.write(ctx.dir / "manifest.json");

  try {
    it->second(ctx);
  } catch (const std::exception& e) {
    m.finished = utc_timestamp();
    m.status = std::string("failed: ") + e.what();
    m.write(ctx.dir / "manifest.json");
    throw;
  }
  m.finished = utc_timestamp();
  m.status = "ok";
  m.write(ctx.dir / "manifest.json");
  return ctx.dir;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return kExitConfig;
  if (dynamic_cast<const NumericError*>(&e) != nullptr) return kExitNumeric;
  if (dynamic_cast<const IoError*>(&e) != nullptr) return kExitIo;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e) != nullptr) return kExitIo;
  return kExitFailure;
}

}  // namespace tdflow
