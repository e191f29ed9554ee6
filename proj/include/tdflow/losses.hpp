#pragma once

#include "tdflow/dataset.hpp"
#include "tdflow/ghm.hpp"
#include "tdflow/optim.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tdflow {

enum class Algorithm { McCfm, TdCfm, TdCfmCoupled, Td2Cfm, TdDd, Td2Dd };

Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm algo);
bool is_diffusion(Algorithm algo);
const std::vector<Algorithm>& all_algorithms();

/// How the Bellman mixture is realized per batch element: a Bernoulli(gamma)
/// draw picks one branch, or both branches are kept with weights (1 - gamma, gamma).
enum class BranchMode { Bernoulli, Weighted };

BranchMode parse_branch_mode(const std::string& name);
std::string to_string(BranchMode mode);
BranchMode default_branch_mode(Algorithm algo);

/// Independent random streams for each purpose so that a change in one
/// consumer never shifts the draws seen by another.
struct TrainingStreams {
  Rng batch;
  Rng policy;
  Rng time;
  Rng noise;
  Rng branch;
  Rng bootstrap;

  explicit TrainingStreams(std::uint64_t seed);
};

/// Minibatch of transitions with conditioning for the model and for bootstrapping.
struct TransitionBatch {
  Conditioning cond;  // (S, A, policy)
  Conditioning next;  // (S', pi(S'), policy)
  Mat s_next;
};

/// Uniform draws with replacement from `ds`. With more than one policy each
/// element is assigned a policy index uniformly and bootstraps through it.
TransitionBatch sample_transitions(const TrajectoryDataset& ds, const std::vector<PolicyPtr>& policies,
                                   bool policy_conditioned, int batch_size, TrainingStreams& rng);

struct TargetConfig {
  Algorithm algorithm = Algorithm::Td2Cfm;
  double gamma = 0.9;
  BranchMode branch_mode = BranchMode::Weighted;
  PathKind path = PathKind::Straight;
  OdeSolverCfg solver{10};
  int ddim_steps = 20;
  double t_cap = 1e-6;  // t ~ U[0, 1 - t_cap]
  // Probe-only overrides; the streams are still consumed so other draws stay aligned.
  std::optional<double> fixed_t;
  std::optional<RowVec> fixed_x0;
};

/// Regression problem: rows of (t, x_t, cond) with target vectors and weights.
/// The loss is sum_i w_i ||v_i - target_i||^2 / (n_source * dim).
struct RegressionBatch {
  Vec t;
  Mat x;
  Conditioning cond;
  Mat target;
  Vec weight;
  std::vector<char> bootstrap;  // 1 for rows from the bootstrap branch
  Eigen::Index n_source = 0;
};

/// Frozen target model used for bootstrapping; exactly one member is set, matching the algorithm family.
struct BootstrapModel {
  const FlowTarget* flow = nullptr;
  const NoisePredictor* noise = nullptr;
  const DiffusionSchedule* schedule = nullptr;
};

/// Draws samples of the Bellman target for each transition and builds the regression batch.
RegressionBatch sample_bellman_target(const TransitionBatch& batch, const TargetConfig& cfg,
                                      const BootstrapModel& target, TrainingStreams& rng);

struct LossValue {
  double total = 0.0;
  double one_step = 0.0;
  double bootstrap = 0.0;
};

/// Weighted regression loss and its parameter gradient (accumulated into `grads`, which is reset).
LossValue regression_loss(const VectorFieldNet& net, const RegressionBatch& batch, ModelParams& grads);
/// Loss value only.
LossValue regression_loss(const VectorFieldNet& net, const RegressionBatch& batch);

struct TrainConfig {
  TargetConfig target;
  int batch_size = 256;
  int n_steps = 1000;
  AdamWConfig optimizer;
  double ema_zeta = 0.999;
  std::uint64_t seed = 0;
  std::optional<BranchMode> branch_mode;  // default_branch_mode(algorithm) when unset
  DiffusionSchedule schedule;

  void validate() const;
  BranchMode effective_branch_mode() const;
};

struct MetricsRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double one_step_loss = 0.0;
  double bootstrap_loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  VectorFieldNet online;
  VectorFieldNet target;
  std::vector<MetricsRow> metrics;
};

/// The template loop: sample transitions, build targets from the EMA network,
/// take one AdamW step on the online network, update the EMA.
/// Throws NumericError when the loss or parameters become non-finite.
TrainResult train(const TrajectoryDataset& ds, const std::vector<PolicyPtr>& policies, VectorFieldNet init,
                  const TrainConfig& cfg, const std::function<void(const MetricsRow&)>& on_step = {});

/// Wraps a trained network in the sampler matching its algorithm family.
GhmPtr make_ghm(Algorithm algo, const VectorFieldNet& net, const TrainConfig& cfg);

}  // namespace tdflow
