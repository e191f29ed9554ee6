#pragma once

#include "tdflow/common.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace tdflow {

/// A reward-free environment over real-valued state and action vectors.
/// Implementations are immutable after construction; all randomness comes
/// from the caller's RNG.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string id() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;

  /// One transition. Throws ConfigError when `s` is not a valid state.
  virtual Vec step(const Vec& s, const Vec& a, Rng& rng) const = 0;
  virtual bool contains(const Vec& s) const = 0;
  virtual Vec sample_initial_state(Rng& rng) const = 0;
  /// Action drawn uniformly from the action space (the behavior policy).
  virtual Vec sample_uniform_action(Rng& rng) const = 0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Vec act(const Vec& s, Rng& rng) const = 0;
  virtual std::string describe() const = 0;
};

using PolicyPtr = std::shared_ptr<const Policy>;

// ---------------------------------------------------------------------------
// Tabular MDPs

/// Finite MDP with transition table stored as an (n_states*n_actions) x n_states
/// matrix; row s*n_actions + a holds P(.|s,a).
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  Mat transition;
  double gamma = 0.9;

  int row(int s, int a) const { return s * n_actions + a; }
  /// Checks shapes, non-negativity, row sums within 1e-12 and gamma in [0,1).
  void validate() const;
};

/// Per-state action distribution; deterministic policies have one-hot rows.
struct TabularPolicy {
  Mat probs;  // n_states x n_actions

  static TabularPolicy deterministic(const std::vector<int>& actions, int n_actions);
  static TabularPolicy uniform(int n_states, int n_actions);
  bool is_deterministic() const;
  int sample(int s, Rng& rng) const;
  void validate(int n_states, int n_actions) const;
};

/// Sparse matrix-free helpers over the tabular objects.
/// P^pi as an (SA x SA) matrix: row (s,a) -> sum_{s'} P(s'|s,a) pi(a'|s') at column (s',a').
Mat state_action_kernel(const TabularMDP& mdp, const TabularPolicy& pi);
/// Pi as an (S x SA) matrix with Pi(s, (s,a)) = pi(a|s).
Mat policy_matrix(const TabularMDP& mdp, const TabularPolicy& pi);

/// A tabular MDP presented through the vector Environment interface. States are
/// user-assigned points in R^d (default: integer line); actions are one-hot.
class TabularEnv final : public Environment {
 public:
  TabularEnv(TabularMDP mdp, Mat embedding, std::string id = "tabular");

  std::string id() const override { return id_; }
  int state_dim() const override { return static_cast<int>(embedding_.cols()); }
  int action_dim() const override { return mdp_.n_actions; }
  Vec step(const Vec& s, const Vec& a, Rng& rng) const override;
  bool contains(const Vec& s) const override;
  Vec sample_initial_state(Rng& rng) const override;
  Vec sample_uniform_action(Rng& rng) const override;

  const TabularMDP& mdp() const { return mdp_; }
  const Mat& embedding() const { return embedding_; }
  /// Index of the state whose embedding equals `s` (tolerance 1e-9); -1 if none.
  int index_of(const Vec& s) const;
  /// Index of the closest embedded state (used to score model samples).
  int nearest_index(const Eigen::Ref<const Vec>& x) const;
  Vec state(int index) const { return embedding_.row(index).transpose(); }
  Vec action(int a) const;
  int action_index(const Vec& a) const;
  int step_index(int s, int a, Rng& rng) const;

 private:
  TabularMDP mdp_;
  Mat embedding_;
  std::string id_;
};

Mat integer_line_embedding(int n_states);

/// n-state deterministic cycle with a single action: s -> s+1 mod n.
TabularMDP make_cycle(int n_states, double gamma = 0.9);
/// Random MDP with Dirichlet(1)-like rows; deterministic given the RNG.
TabularMDP make_random_mdp(int n_states, int n_actions, Rng& rng, double gamma = 0.9);
TabularPolicy make_random_policy(int n_states, int n_actions, Rng& rng, bool deterministic);

/// Deterministic 4-connected gridworld with actions {stay, up, down, left, right}.
/// Moves into a wall cell or off the grid leave the agent in place.
struct GridSpec {
  int width = 5;
  int height = 5;
  std::vector<std::pair<int, int>> blocked;  // (x, y) cells
};

std::shared_ptr<TabularEnv> make_gridworld(const GridSpec& spec, double gamma = 0.9);
/// Deterministic policy that walks along shortest paths (BFS) to `goal` and stays there.
TabularPolicy grid_goal_policy(const TabularEnv& grid, const GridSpec& spec, std::pair<int, int> goal);
int grid_cell_index(const GridSpec& spec, int x, int y);

/// Wraps a TabularPolicy so it can act on embedded state vectors.
class TabularPolicyAdapter final : public Policy {
 public:
  TabularPolicyAdapter(std::shared_ptr<const TabularEnv> env, TabularPolicy policy, std::string name = "tabular");
  Vec act(const Vec& s, Rng& rng) const override;
  std::string describe() const override { return name_; }
  const TabularPolicy& table() const { return policy_; }

 private:
  std::shared_ptr<const TabularEnv> env_;
  TabularPolicy policy_;
  std::string name_;
};

/// Uniform-random behavior for any environment.
class UniformPolicy final : public Policy {
 public:
  explicit UniformPolicy(std::shared_ptr<const Environment> env) : env_(std::move(env)) {}
  Vec act(const Vec&, Rng& rng) const override { return env_->sample_uniform_action(rng); }
  std::string describe() const override { return "uniform"; }

 private:
  std::shared_ptr<const Environment> env_;
};

// ---------------------------------------------------------------------------
// Pointmass

struct Segment {
  Eigen::Vector2d a;
  Eigen::Vector2d b;
};

/// First-order 2D pointmass: position += clamp(action, +-max_speed) * dt.
/// Positions are clipped to the bounding box; a move whose path crosses a wall
/// segment is rejected and the agent stays put.
class PointmassEnv final : public Environment {
 public:
  PointmassEnv(Eigen::Vector2d lo, Eigen::Vector2d hi, std::vector<Segment> walls, double dt, double max_speed,
               std::string id = "pointmass");

  std::string id() const override { return id_; }
  int state_dim() const override { return 2; }
  int action_dim() const override { return 2; }
  Vec step(const Vec& s, const Vec& a, Rng& rng) const override;
  bool contains(const Vec& s) const override;
  Vec sample_initial_state(Rng& rng) const override;
  Vec sample_uniform_action(Rng& rng) const override;

  Vec step_deterministic(const Vec& s, const Vec& a) const;
  const Eigen::Vector2d& lo() const { return lo_; }
  const Eigen::Vector2d& hi() const { return hi_; }
  const std::vector<Segment>& walls() const { return walls_; }
  double max_speed() const { return max_speed_; }
  double dt() const { return dt_; }

 private:
  Eigen::Vector2d lo_;
  Eigen::Vector2d hi_;
  std::vector<Segment> walls_;
  double dt_;
  double max_speed_;
  std::string id_;
};

bool segments_intersect(const Eigen::Vector2d& p, const Eigen::Vector2d& q, const Segment& wall);

/// Scripted controller: a = gain * (goal - s) + orbit * perp(goal - s) + noise * N(0, I).
/// The tangential term makes trajectories circle the goal instead of stopping on it.
class GoalSeekingPolicy final : public Policy {
 public:
  GoalSeekingPolicy(Eigen::Vector2d goal, double gain, double orbit = 0.0, double noise = 0.0);
  Vec act(const Vec& s, Rng& rng) const override;
  std::string describe() const override;

  const Eigen::Vector2d& goal() const { return goal_; }

 private:
  Eigen::Vector2d goal_;
  double gain_;
  double orbit_;
  double noise_;
};

}  // namespace tdflow
