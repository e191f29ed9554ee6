#pragma once

#include "tdflow/checkpoint.hpp"
#include "tdflow/config.hpp"
#include "tdflow/planner.hpp"

#include <memory>
#include <string>
#include <vector>

namespace tdflow {

/// Live objects described by a RunConfig.
struct Experiment {
  std::shared_ptr<const Environment> env;
  std::shared_ptr<const TabularEnv> tabular;  // set for tabular environments
  PolicyLibrary library;                       // evaluation / conditioning policies
  std::vector<TabularPolicy> tables;           // filled when every policy is tabular
  PolicyPtr behavior;
  RewardFn reward;                             // empty without a reward section
};

Experiment build_experiment(const RunConfig& cfg);
RewardFn build_reward(const RewardConfig& cfg, const std::shared_ptr<const TabularEnv>& tabular);

/// Reward evaluated on every embedded state of a tabular environment.
Vec reward_table(const TabularEnv& env, const RewardFn& reward);

/// Loads dataset.path when set, otherwise collects transitions with the behavior
/// policy. MC-CFM replaces each next state by a geometric sample under policy 0.
TrajectoryDataset build_dataset(const Experiment& exp, const RunConfig& cfg, Algorithm algo, double gamma);

/// Network shape for the experiment; more than one policy makes the model policy conditioned.
Architecture build_architecture(const Experiment& exp, const RunConfig& cfg);

/// Metadata stored with a trained checkpoint.
std::string checkpoint_metadata(const RunConfig& cfg, Algorithm algo, double gamma);

/// Sampler for a checkpoint's target network, using the algorithm and solver settings
/// stored in its metadata.
GhmPtr ghm_from_checkpoint(const Checkpoint& ck);

/// Policy used as the conditioning / evaluation policy for eval.policy_index.
const Policy& eval_policy(const Experiment& exp, const EvalProtocolCfg& protocol);

}  // namespace tdflow
