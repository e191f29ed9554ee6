#include "tdflow/experiment.hpp"

#include <json.hpp>

namespace tdflow {

namespace {

GridSpec grid_spec(const EnvConfig& e) { return {e.width, e.height, e.blocked}; }

std::shared_ptr<const Environment> build_env(const EnvConfig& e, double gamma,
                                             std::shared_ptr<const TabularEnv>& tabular) {
  if (e.kind == "pointmass") {
    std::vector<Segment> walls;
    for (const auto& w : e.walls) walls.push_back({{w[0], w[1]}, {w[2], w[3]}});
    return std::make_shared<PointmassEnv>(Eigen::Vector2d(e.lo[0], e.lo[1]), Eigen::Vector2d(e.hi[0], e.hi[1]),
                                          std::move(walls), e.dt, e.max_speed);
  }
  if (e.kind == "gridworld") {
    tabular = make_gridworld(grid_spec(e), gamma);
  } else if (e.kind == "cycle") {
    tabular = std::make_shared<TabularEnv>(make_cycle(e.n_states, gamma), integer_line_embedding(e.n_states), "cycle");
  } else if (e.kind == "random_mdp") {
    Rng rng = make_rng(e.seed);
    tabular = std::make_shared<TabularEnv>(make_random_mdp(e.n_states, e.n_actions, rng, gamma),
                                           integer_line_embedding(e.n_states), "random_mdp");
  } else {
    throw ConfigError("config: env.kind " + e.kind + " is not supported");
  }
  return tabular;
}

struct BuiltPolicy {
  PolicyPtr policy;
  std::optional<TabularPolicy> table;
};

BuiltPolicy build_policy(const PolicyConfig& p, const EnvConfig& e, const std::shared_ptr<const Environment>& env,
                         const std::shared_ptr<const TabularEnv>& tabular) {
  auto tabular_policy = [&](TabularPolicy table) {
    return BuiltPolicy{std::make_shared<TabularPolicyAdapter>(tabular, table, p.name), table};
  };
  if (p.kind == "uniform") {
    if (tabular) return tabular_policy(TabularPolicy::uniform(tabular->mdp().n_states, tabular->mdp().n_actions));
    return {std::make_shared<UniformPolicy>(env), std::nullopt};
  }
  if (p.kind == "goal_seeking") {
    require(!tabular, "config: policy " + p.name + ": goal_seeking needs a continuous environment");
    return {std::make_shared<GoalSeekingPolicy>(Eigen::Vector2d(p.goal[0], p.goal[1]), p.gain, p.orbit, p.noise),
            std::nullopt};
  }
  require(tabular != nullptr, "config: policy " + p.name + ": " + p.kind + " needs a tabular environment");
  const auto& mdp = tabular->mdp();
  if (p.kind == "grid_goal") {
    require(e.kind == "gridworld", "config: policy " + p.name + ": grid_goal needs env.kind gridworld");
    const std::pair<int, int> goal{static_cast<int>(p.goal[0]), static_cast<int>(p.goal[1])};
    require(goal.first == p.goal[0] && goal.second == p.goal[1], "config: policy " + p.name + ": goal must be a cell");
    return tabular_policy(grid_goal_policy(*tabular, grid_spec(e), goal));
  }
  if (p.kind == "random_tabular") {
    Rng rng = make_rng(p.seed);
    return tabular_policy(make_random_policy(mdp.n_states, mdp.n_actions, rng, p.deterministic));
  }
  if (p.kind == "fixed_action") {
    require(p.action < mdp.n_actions, "config: policy " + p.name + ": action out of range");
    return tabular_policy(TabularPolicy::deterministic(std::vector<int>(static_cast<std::size_t>(mdp.n_states),
                                                                         p.action),
                                                       mdp.n_actions));
  }
  throw ConfigError("config: policy kind " + p.kind + " is not supported");
}

}  // namespace

RewardFn build_reward(const RewardConfig& r, const std::shared_ptr<const TabularEnv>& tabular) {
  if (r.kind == "constant") {
    return [c = r.value](const Vec&) { return c; };
  }
  if (r.kind == "gaussian" || r.kind == "ball") {
    const Vec center = Eigen::Map<const Vec>(r.center.data(), static_cast<Eigen::Index>(r.center.size()));
    auto dist2 = [center](const Vec& x) {
      require(x.size() == center.size(), "reward: center dimension does not match the state");
      return (x - center).squaredNorm();
    };
    if (r.kind == "gaussian") {
      return [dist2, c = r.value, w = r.width](const Vec& x) { return c * std::exp(-0.5 * dist2(x) / (w * w)); };
    }
    return [dist2, c = r.value, rad = r.radius](const Vec& x) { return dist2(x) <= rad * rad ? c : 0.0; };
  }
  if (r.kind == "table") {
    require(tabular != nullptr, "config: reward.table needs a tabular environment");
    require(static_cast<int>(r.values.size()) == tabular->mdp().n_states,
            "config: reward.values must have one entry per state");
    const Vec values = Eigen::Map<const Vec>(r.values.data(), static_cast<Eigen::Index>(r.values.size()));
    return [tabular, values](const Vec& x) { return values[tabular->nearest_index(x)]; };
  }
  if (r.kind == "sum") {
    std::vector<RewardFn> terms;
    for (const auto& t : r.terms) terms.push_back(build_reward(t, tabular));
    return [terms = std::move(terms)](const Vec& x) {
      double total = 0.0;
      for (const auto& t : terms) total += t(x);
      return total;
    };
  }
  throw ConfigError("config: reward kind " + r.kind + " is not supported");
}

Vec reward_table(const TabularEnv& env, const RewardFn& reward) {
  Vec out(env.mdp().n_states);
  for (int s = 0; s < env.mdp().n_states; ++s) out[s] = reward(env.state(s));
  return out;
}

Experiment build_experiment(const RunConfig& cfg) {
  Experiment exp;
  std::shared_ptr<const TabularEnv> tabular;
  exp.env = build_env(cfg.env, cfg.train.gamma, tabular);
  exp.tabular = tabular;

  std::vector<PolicyConfig> policies = cfg.policies;
  if (policies.empty()) policies.push_back(PolicyConfig{});
  bool all_tabular = true;
  std::vector<TabularPolicy> tables;
  for (const auto& p : policies) {
    auto built = build_policy(p, cfg.env, exp.env, tabular);
    exp.library.policies.push_back(built.policy);
    exp.library.names.push_back(p.name);
    if (built.table) tables.push_back(*built.table);
    else all_tabular = false;
  }
  if (all_tabular) exp.tables = std::move(tables);
  exp.library.validate();
  exp.behavior = build_policy(cfg.behavior, cfg.env, exp.env, tabular).policy;
  if (cfg.reward) exp.reward = build_reward(*cfg.reward, tabular);
  return exp;
}

TrajectoryDataset build_dataset(const Experiment& exp, const RunConfig& cfg, Algorithm algo, double gamma) {
  if (cfg.dataset.path) {
    auto ds = load_dataset(*cfg.dataset.path);
    require(ds.state_dim() == exp.env->state_dim() && ds.action_dim() == exp.env->action_dim(),
            "dataset: " + cfg.dataset.path->string() + " does not match the environment dimensions");
    return ds;
  }
  const auto n = static_cast<std::size_t>(cfg.dataset.n_transitions);
  const std::uint64_t seed = cfg.dataset.seed.value_or(mix_seed(cfg.seed, 11));
  if (algo == Algorithm::McCfm) {
    require(exp.library.size() == 1, "config: mc-cfm trains a single-policy model");
    return collect_geometric_dataset(*exp.env, *exp.behavior, *exp.library.policies.front(), gamma, n, seed,
                                     cfg.dataset.episode_length);
  }
  return collect_dataset(*exp.env, *exp.behavior, n, seed, cfg.dataset.episode_length);
}

Architecture build_architecture(const Experiment& exp, const RunConfig& cfg) {
  Architecture a;
  a.state_dim = exp.env->state_dim();
  a.cond_state_dim = exp.env->state_dim();
  a.action_dim = exp.env->action_dim();
  a.n_policies = exp.library.size() > 1 ? static_cast<int>(exp.library.size()) : 0;
  a.policy_embed_dim = cfg.model.policy_embed_dim;
  a.width = cfg.model.width;
  a.n_hidden = cfg.model.n_hidden;
  a.time_embed_dim = cfg.model.time_embed_dim;
  a.validate();
  return a;
}

std::string checkpoint_metadata(const RunConfig& cfg, Algorithm algo, double gamma) {
  nlohmann::json m;
  m["algorithm"] = to_string(algo);
  m["gamma"] = gamma;
  m["path"] = to_string(cfg.train.path);
  m["ode_steps"] = cfg.train.ode_steps;
  m["ddim_steps"] = cfg.train.ddim_steps;
  m["env"] = cfg.env.kind;
  return m.dump();
}

GhmPtr ghm_from_checkpoint(const Checkpoint& ck) {
  const auto m = nlohmann::json::parse(ck.metadata_json);
  require(m.contains("algorithm"), "checkpoint: metadata has no algorithm");
  const Algorithm algo = parse_algorithm(m.at("algorithm").get<std::string>());
  TrainConfig tc;
  tc.target.algorithm = algo;
  tc.target.solver.n_steps = m.value("ode_steps", 10);
  tc.target.ddim_steps = m.value("ddim_steps", 20);
  return make_ghm(algo, VectorFieldNet(ck.arch, ck.target), tc);
}

const Policy& eval_policy(const Experiment& exp, const EvalProtocolCfg& protocol) {
  const auto index = static_cast<std::size_t>(std::max(0, protocol.policy_index));
  require(index < exp.library.size(), "config: eval.policy_index is out of range");
  return *exp.library.policies[index];
}

}  // namespace tdflow
