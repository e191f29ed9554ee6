#pragma once

#include "tdflow/eval.hpp"
#include "tdflow/losses.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tdflow {

/// The JSON schema that every run configuration is checked against.
extern const std::string_view kConfigSchema;

/// Checks `json_text` against kConfigSchema. Throws ConfigError naming the
/// offending field as a path such as `train.gamma` or `policies[1].kind`.
void validate_config_json(const std::string& json_text);

struct EnvConfig {
  std::string kind = "pointmass";  // cycle | random_mdp | gridworld | pointmass
  int n_states = 5;
  int n_actions = 2;
  std::uint64_t seed = 0;
  int width = 5;
  int height = 5;
  std::vector<std::pair<int, int>> blocked;
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};
  std::vector<std::array<double, 4>> walls;  // x0, y0, x1, y1
  double dt = 0.1;
  double max_speed = 0.5;
};

struct PolicyConfig {
  std::string kind = "uniform";  // uniform | goal_seeking | grid_goal | random_tabular | fixed_action
  std::string name;
  std::array<double, 2> goal{0.5, 0.5};
  double gain = 1.0;
  double orbit = 0.0;
  double noise = 0.0;
  std::uint64_t seed = 0;
  bool deterministic = true;
  int action = 0;
};

struct RewardConfig {
  std::string kind = "constant";  // constant | gaussian | ball | table | sum
  double value = 1.0;
  std::vector<double> center;
  double width = 0.1;
  double radius = 0.1;
  std::vector<double> values;
  std::vector<RewardConfig> terms;
};

struct DatasetConfig {
  int n_transitions = 20000;
  int episode_length = 100;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> path;
};

struct ModelConfig {
  int width = 256;
  int n_hidden = 3;
  int time_embed_dim = 64;
  int policy_embed_dim = 8;
  std::optional<std::uint64_t> init_seed;
};

struct TrainSection {
  Algorithm algorithm = Algorithm::Td2Cfm;
  double gamma = 0.9;
  PathKind path = PathKind::Straight;
  std::optional<BranchMode> branch_mode;
  int batch_size = 256;
  int steps = 1000;
  double lr = 1e-4;
  double adam_eps = 1e-4;
  double weight_decay = 1e-3;
  double ema = 0.999;
  int ode_steps = 10;
  int ddim_steps = 20;
  int log_every = 1;
};

struct EvalSection {
  EvalProtocolCfg protocol;  // gamma is taken from the train section
  bool nll = true;
};

struct SweepSection {
  std::vector<Algorithm> algorithms{Algorithm::TdCfm, Algorithm::Td2Cfm};
  std::vector<double> gammas{0.8, 0.9, 0.95, 0.98, 0.99};
};

struct FrozenModelConfig {
  std::string kind = "straight_affine";  // checkpoint | gaussian_marginal | straight_affine
  double scale = 0.5;
  std::vector<double> offset;
};

struct ProbeSection {
  std::vector<Algorithm> algorithms{Algorithm::TdCfm, Algorithm::TdCfmCoupled, Algorithm::Td2Cfm};
  double gamma = 0.99;
  int n_samples = 10000;
  int n_boot = 200;
  FrozenModelConfig frozen;
};

struct PlanSection {
  int episodes = 50;
  int length = 30;
  int n_ghm_samples = 128;
  std::string q_source = "model";  // model | oracle
};

struct OracleSection {
  std::optional<double> gamma;
  int iterations = 50;
};

struct PlotSection {
  std::filesystem::path csv;
  std::string x;
  std::vector<std::string> y;
  std::string kind = "line";  // line | bar
  std::string title;
  bool log_x = false;
  std::string group;
};

/// Declarative experiment description. Relative paths are resolved against
/// the directory of the config file.
struct RunConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> checkpoint;
  EnvConfig env;
  std::vector<PolicyConfig> policies;  // empty: a single uniform policy
  PolicyConfig behavior;               // defaults to uniform
  std::optional<RewardConfig> reward;
  DatasetConfig dataset;
  ModelConfig model;
  TrainSection train;
  EvalSection eval;
  SweepSection sweep;
  ProbeSection probe;
  PlanSection plan;
  OracleSection oracle;
  std::optional<PlotSection> plot;

  /// Compact, key-sorted JSON of the source document; hashed into the run manifest.
  std::string canonical_json;
};

/// Schema-checks and parses a config document.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Training hyperparameters assembled from the train section.
TrainConfig make_train_config(const RunConfig& cfg, std::uint64_t seed);

}  // namespace tdflow
