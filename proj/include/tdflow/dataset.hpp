#pragma once

#include "tdflow/env.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tdflow {

/// Replay buffer of one-step transitions stored column-blocked: row i of
/// `s`, `a`, `s_next` together form transition i.
struct TrajectoryDataset {
  std::string env_id;
  std::uint64_t source_seed = 0;
  Mat s;
  Mat a;
  Mat s_next;

  std::size_t size() const { return static_cast<std::size_t>(s.rows()); }
  int state_dim() const { return static_cast<int>(s.cols()); }
  int action_dim() const { return static_cast<int>(a.cols()); }
  void validate() const;
};

/// States visited by `policy` from s0: horizon+1 rows, the first one s0.
Mat rollout(const Environment& env, const Policy& policy, const Vec& s0, int horizon, Rng& rng);
Mat rollout(const Environment& env, const Policy& policy, const Vec& s0, int horizon, std::uint64_t seed);

struct GeometricDraw {
  Vec state;
  int steps = 0;
};

/// S_T with T ~ Geometric(1 - gamma) on {1, 2, ...}: take a0 first, then follow `policy`.
GeometricDraw geometric_sample_with_time(const Environment& env, const Policy& policy, const Vec& s0, const Vec& a0,
                                         double gamma, Rng& rng);
Vec geometric_sample(const Environment& env, const Policy& policy, const Vec& s0, const Vec& a0, double gamma,
                     Rng& rng);

/// Draws a stopping time T ~ Geometric(1 - gamma) with support {1, 2, ...}.
int geometric_steps(double gamma, Rng& rng);

/// Exactly `n_transitions` tuples generated by `behavior`. Episodes restart from
/// env.sample_initial_state() every `episode_length` steps.
TrajectoryDataset collect_dataset(const Environment& env, const Policy& behavior, std::size_t n_transitions,
                                  std::uint64_t seed, int episode_length = 100);

/// Same (s, a) pairs as collect_dataset but each s_next replaced by a geometric
/// sample under `policy`: training data for Monte-Carlo baselines.
TrajectoryDataset collect_geometric_dataset(const Environment& env, const Policy& behavior, const Policy& policy,
                                            double gamma, std::size_t n_transitions, std::uint64_t seed,
                                            int episode_length = 100);

/// Binary layout (little endian):
///   "TDFLOWDS" | u32 version | u32 len + env_id bytes | u32 state_dim | u32 action_dim
///   | u64 count | u64 source_seed | count * (state_dim + action_dim + state_dim) f64
/// A JSON sidecar `<path>.json` repeats the header fields for humans.
void save_dataset(const TrajectoryDataset& ds, const std::filesystem::path& path);
TrajectoryDataset load_dataset(const std::filesystem::path& path);

}  // namespace tdflow
