#include "tdflow/env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

namespace tdflow {

namespace {

int sample_categorical(const Eigen::Ref<const RowVec>& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) {
      return static_cast<int>(i);
    }
  }
  // Round-off: fall back to the last index with positive mass.
  for (Eigen::Index i = probs.size() - 1; i >= 0; --i) {
    if (probs[i] > 0.0) {
      return static_cast<int>(i);
    }
  }
  return 0;
}

}  // namespace

void TabularMDP::validate() const {
  require(n_states >= 1 && n_actions >= 1, "TabularMDP: n_states and n_actions must be >= 1");
  require(transition.rows() == n_states * n_actions && transition.cols() == n_states,
          "TabularMDP: transition must have shape (n_states*n_actions) x n_states");
  require(gamma >= 0.0 && gamma < 1.0, "TabularMDP: gamma must lie in [0, 1)");
  require((transition.array() >= 0.0).all(), "TabularMDP: negative transition probability");
  for (Eigen::Index r = 0; r < transition.rows(); ++r) {
    require(std::abs(transition.row(r).sum() - 1.0) <= 1e-12, "TabularMDP: transition row does not sum to 1");
  }
}

TabularPolicy TabularPolicy::deterministic(const std::vector<int>& actions, int n_actions) {
  TabularPolicy pi;
  pi.probs = Mat::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    require(actions[s] >= 0 && actions[s] < n_actions, "TabularPolicy: action index out of range");
    pi.probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  }
  return pi;
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  TabularPolicy pi;
  pi.probs = Mat::Constant(n_states, n_actions, 1.0 / n_actions);
  return pi;
}

bool TabularPolicy::is_deterministic() const {
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    if (probs.row(s).maxCoeff() != 1.0) {
      return false;
    }
  }
  return true;
}

int TabularPolicy::sample(int s, Rng& rng) const {
  require(s >= 0 && s < probs.rows(), "TabularPolicy: state index out of range");
  return sample_categorical(probs.row(s), rng);
}

void TabularPolicy::validate(int n_states, int n_actions) const {
  require(probs.rows() == n_states && probs.cols() == n_actions, "TabularPolicy: shape mismatch");
  require((probs.array() >= 0.0).all(), "TabularPolicy: negative probability");
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    require(std::abs(probs.row(s).sum() - 1.0) <= 1e-12, "TabularPolicy: row does not sum to 1");
  }
}

Mat policy_matrix(const TabularMDP& mdp, const TabularPolicy& pi) {
  Mat out = Mat::Zero(mdp.n_states, mdp.n_states * mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      out(s, mdp.row(s, a)) = pi.probs(s, a);
    }
  }
  return out;
}

Mat state_action_kernel(const TabularMDP& mdp, const TabularPolicy& pi) {
  return mdp.transition * policy_matrix(mdp, pi);
}

// ---------------------------------------------------------------------------

TabularEnv::TabularEnv(TabularMDP mdp, Mat embedding, std::string id)
    : mdp_(std::move(mdp)), embedding_(std::move(embedding)), id_(std::move(id)) {
  mdp_.validate();
  require(embedding_.rows() == mdp_.n_states && embedding_.cols() >= 1,
          "TabularEnv: embedding must have one row per state");
}

int TabularEnv::index_of(const Vec& s) const {
  if (s.size() != embedding_.cols()) {
    return -1;
  }
  for (Eigen::Index i = 0; i < embedding_.rows(); ++i) {
    if ((embedding_.row(i).transpose() - s).cwiseAbs().maxCoeff() <= 1e-9) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

int TabularEnv::nearest_index(const Eigen::Ref<const Vec>& x) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < embedding_.rows(); ++i) {
    const double d = (embedding_.row(i).transpose() - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

Vec TabularEnv::action(int a) const {
  require(a >= 0 && a < mdp_.n_actions, "TabularEnv: action index out of range");
  Vec v = Vec::Zero(mdp_.n_actions);
  v[a] = 1.0;
  return v;
}

int TabularEnv::action_index(const Vec& a) const {
  require(a.size() == mdp_.n_actions, "TabularEnv: action dimension mismatch");
  Eigen::Index idx = 0;
  a.maxCoeff(&idx);
  return static_cast<int>(idx);
}

int TabularEnv::step_index(int s, int a, Rng& rng) const {
  require(s >= 0 && s < mdp_.n_states, "TabularEnv: state index out of range");
  require(a >= 0 && a < mdp_.n_actions, "TabularEnv: action index out of range");
  return sample_categorical(mdp_.transition.row(mdp_.row(s, a)), rng);
}

Vec TabularEnv::step(const Vec& s, const Vec& a, Rng& rng) const {
  const int si = index_of(s);
  require(si >= 0, "TabularEnv: state is not an embedded state");
  return state(step_index(si, action_index(a), rng));
}

bool TabularEnv::contains(const Vec& s) const { return index_of(s) >= 0; }

Vec TabularEnv::sample_initial_state(Rng& rng) const {
  const auto i = static_cast<int>(uniform01(rng) * mdp_.n_states);
  return state(std::min(i, mdp_.n_states - 1));
}

Vec TabularEnv::sample_uniform_action(Rng& rng) const {
  const auto i = static_cast<int>(uniform01(rng) * mdp_.n_actions);
  return action(std::min(i, mdp_.n_actions - 1));
}

Mat integer_line_embedding(int n_states) {
  Mat e(n_states, 1);
  for (int i = 0; i < n_states; ++i) {
    e(i, 0) = i;
  }
  return e;
}

TabularMDP make_cycle(int n_states, double gamma) {
  require(n_states >= 1, "make_cycle: n_states must be >= 1");
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = 1;
  mdp.gamma = gamma;
  mdp.transition = Mat::Zero(n_states, n_states);
  for (int s = 0; s < n_states; ++s) {
    mdp.transition(s, (s + 1) % n_states) = 1.0;
  }
  mdp.validate();
  return mdp;
}

TabularMDP make_random_mdp(int n_states, int n_actions, Rng& rng, double gamma) {
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.transition = Mat(n_states * n_actions, n_states);
  for (Eigen::Index r = 0; r < mdp.transition.rows(); ++r) {
    // Exponential draws normalized give a flat Dirichlet row.
    for (Eigen::Index c = 0; c < n_states; ++c) {
      mdp.transition(r, c) = -std::log(1.0 - uniform01(rng));
    }
    mdp.transition.row(r) /= mdp.transition.row(r).sum();
  }
  // Exact renormalization of the last entry keeps row sums at 1 to machine precision.
  for (Eigen::Index r = 0; r < mdp.transition.rows(); ++r) {
    const double head = mdp.transition.row(r).head(n_states - 1).sum();
    mdp.transition(r, n_states - 1) = std::max(0.0, 1.0 - head);
  }
  mdp.validate();
  return mdp;
}

TabularPolicy make_random_policy(int n_states, int n_actions, Rng& rng, bool deterministic) {
  if (deterministic) {
    std::vector<int> actions(static_cast<std::size_t>(n_states));
    for (auto& a : actions) {
      a = std::min(n_actions - 1, static_cast<int>(uniform01(rng) * n_actions));
    }
    return TabularPolicy::deterministic(actions, n_actions);
  }
  TabularPolicy pi;
  pi.probs = Mat(n_states, n_actions);
  for (Eigen::Index s = 0; s < n_states; ++s) {
    for (Eigen::Index a = 0; a < n_actions; ++a) {
      pi.probs(s, a) = -std::log(1.0 - uniform01(rng));
    }
    pi.probs.row(s) /= pi.probs.row(s).sum();
  }
  return pi;
}

// ---------------------------------------------------------------------------
// Gridworld

int grid_cell_index(const GridSpec& spec, int x, int y) {
  require(x >= 0 && x < spec.width && y >= 0 && y < spec.height, "grid: cell out of range");
  return y * spec.width + x;
}

namespace {

constexpr int kGridActions = 5;
constexpr int kDx[kGridActions] = {0, 0, 0, -1, 1};
constexpr int kDy[kGridActions] = {0, 1, -1, 0, 0};

bool is_blocked(const GridSpec& spec, int x, int y) {
  return std::find(spec.blocked.begin(), spec.blocked.end(), std::make_pair(x, y)) != spec.blocked.end();
}

}  // namespace

std::shared_ptr<TabularEnv> make_gridworld(const GridSpec& spec, double gamma) {
  require(spec.width >= 1 && spec.height >= 1, "grid: width and height must be >= 1");
  const int n = spec.width * spec.height;
  TabularMDP mdp;
  mdp.n_states = n;
  mdp.n_actions = kGridActions;
  mdp.gamma = gamma;
  mdp.transition = Mat::Zero(n * kGridActions, n);
  Mat embedding(n, 2);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const int s = grid_cell_index(spec, x, y);
      embedding(s, 0) = x;
      embedding(s, 1) = y;
      for (int a = 0; a < kGridActions; ++a) {
        const int nx = x + kDx[a];
        const int ny = y + kDy[a];
        const bool ok = nx >= 0 && nx < spec.width && ny >= 0 && ny < spec.height && !is_blocked(spec, nx, ny);
        mdp.transition(mdp.row(s, a), ok ? grid_cell_index(spec, nx, ny) : s) = 1.0;
      }
    }
  }
  return std::make_shared<TabularEnv>(std::move(mdp), std::move(embedding), "gridworld");
}

TabularPolicy grid_goal_policy(const TabularEnv& grid, const GridSpec& spec, std::pair<int, int> goal) {
  const int n = grid.mdp().n_states;
  const int g = grid_cell_index(spec, goal.first, goal.second);
  // BFS backwards from the goal over the deterministic transition graph.
  std::vector<int> dist(static_cast<std::size_t>(n), -1);
  dist[static_cast<std::size_t>(g)] = 0;
  std::deque<int> queue{g};
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    for (int s = 0; s < n; ++s) {
      if (dist[static_cast<std::size_t>(s)] >= 0) {
        continue;
      }
      for (int a = 0; a < kGridActions; ++a) {
        if (grid.mdp().transition(grid.mdp().row(s, a), cur) == 1.0) {
          dist[static_cast<std::size_t>(s)] = dist[static_cast<std::size_t>(cur)] + 1;
          queue.push_back(s);
          break;
        }
      }
    }
  }
  std::vector<int> actions(static_cast<std::size_t>(n), 0);
  for (int s = 0; s < n; ++s) {
    if (s == g || dist[static_cast<std::size_t>(s)] < 0) {
      continue;
    }
    for (int a = 0; a < kGridActions; ++a) {
      Eigen::Index next = 0;
      grid.mdp().transition.row(grid.mdp().row(s, a)).maxCoeff(&next);
      if (dist[static_cast<std::size_t>(next)] == dist[static_cast<std::size_t>(s)] - 1) {
        actions[static_cast<std::size_t>(s)] = a;
        break;
      }
    }
  }
  return TabularPolicy::deterministic(actions, kGridActions);
}

TabularPolicyAdapter::TabularPolicyAdapter(std::shared_ptr<const TabularEnv> env, TabularPolicy policy,
                                           std::string name)
    : env_(std::move(env)), policy_(std::move(policy)), name_(std::move(name)) {
  policy_.validate(env_->mdp().n_states, env_->mdp().n_actions);
}

Vec TabularPolicyAdapter::act(const Vec& s, Rng& rng) const {
  const int si = env_->index_of(s);
  require(si >= 0, "TabularPolicyAdapter: state is not an embedded state");
  return env_->action(policy_.sample(si, rng));
}

// ---------------------------------------------------------------------------
// Pointmass

PointmassEnv::PointmassEnv(Eigen::Vector2d lo, Eigen::Vector2d hi, std::vector<Segment> walls, double dt,
                           double max_speed, std::string id)
    : lo_(std::move(lo)), hi_(std::move(hi)), walls_(std::move(walls)), dt_(dt), max_speed_(max_speed),
      id_(std::move(id)) {
  require((hi_.array() > lo_.array()).all(), "PointmassEnv: bounds must satisfy lo < hi");
  require(dt_ > 0.0 && max_speed_ > 0.0, "PointmassEnv: dt and max_speed must be positive");
}

namespace {

double cross2(const Eigen::Vector2d& u, const Eigen::Vector2d& v) { return u.x() * v.y() - u.y() * v.x(); }

bool on_segment(const Eigen::Vector2d& p, const Eigen::Vector2d& q, const Eigen::Vector2d& r) {
  return std::min(p.x(), q.x()) <= r.x() && r.x() <= std::max(p.x(), q.x()) && std::min(p.y(), q.y()) <= r.y() &&
         r.y() <= std::max(p.y(), q.y());
}

}  // namespace

bool segments_intersect(const Eigen::Vector2d& p, const Eigen::Vector2d& q, const Segment& wall) {
  const double d1 = cross2(wall.b - wall.a, p - wall.a);
  const double d2 = cross2(wall.b - wall.a, q - wall.a);
  const double d3 = cross2(q - p, wall.a - p);
  const double d4 = cross2(q - p, wall.b - p);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  // Touching counts as crossing so the agent can never end up on a wall.
  return (d1 == 0 && on_segment(wall.a, wall.b, p)) || (d2 == 0 && on_segment(wall.a, wall.b, q)) ||
         (d3 == 0 && on_segment(p, q, wall.a)) || (d4 == 0 && on_segment(p, q, wall.b));
}

bool PointmassEnv::contains(const Vec& s) const {
  return s.size() == 2 && s.allFinite() && (s.array() >= lo_.array()).all() && (s.array() <= hi_.array()).all();
}

Vec PointmassEnv::step_deterministic(const Vec& s, const Vec& a) const {
  require(contains(s), "PointmassEnv: state outside bounds");
  require(a.size() == 2 && a.allFinite(), "PointmassEnv: action must be a finite 2-vector");
  const Eigen::Vector2d from = s;
  const Eigen::Vector2d vel = a.cwiseMax(-max_speed_).cwiseMin(max_speed_);
  const Eigen::Vector2d to = (from + vel * dt_).cwiseMax(lo_).cwiseMin(hi_);
  for (const auto& w : walls_) {
    if (segments_intersect(from, to, w)) {
      return s;
    }
  }
  return to;
}

Vec PointmassEnv::step(const Vec& s, const Vec& a, Rng& /*rng*/) const { return step_deterministic(s, a); }

Vec PointmassEnv::sample_initial_state(Rng& rng) const {
  for (;;) {
    Vec s(2);
    s[0] = lo_.x() + (hi_.x() - lo_.x()) * uniform01(rng);
    s[1] = lo_.y() + (hi_.y() - lo_.y()) * uniform01(rng);
    const bool on_wall = std::any_of(walls_.begin(), walls_.end(),
                                     [&](const Segment& w) { return segments_intersect(s, s, w); });
    if (!on_wall) {
      return s;
    }
  }
}

Vec PointmassEnv::sample_uniform_action(Rng& rng) const {
  Vec a(2);
  a[0] = max_speed_ * (2.0 * uniform01(rng) - 1.0);
  a[1] = max_speed_ * (2.0 * uniform01(rng) - 1.0);
  return a;
}

GoalSeekingPolicy::GoalSeekingPolicy(Eigen::Vector2d goal, double gain, double orbit, double noise)
    : goal_(std::move(goal)), gain_(gain), orbit_(orbit), noise_(noise) {
  require(noise_ >= 0.0, "GoalSeekingPolicy: noise must be non-negative");
}

Vec GoalSeekingPolicy::act(const Vec& s, Rng& rng) const {
  const Eigen::Vector2d d = goal_ - Eigen::Vector2d(s);
  Eigen::Vector2d a = gain_ * d + orbit_ * Eigen::Vector2d(-d.y(), d.x());
  if (noise_ > 0.0) {
    a.x() += noise_ * standard_normal(rng);
    a.y() += noise_ * standard_normal(rng);
  }
  return a;
}

std::string GoalSeekingPolicy::describe() const {
  std::ostringstream os;
  os << "goal(" << goal_.x() << "," << goal_.y() << ") gain=" << gain_ << " orbit=" << orbit_ << " noise=" << noise_;
  return os.str();
}

}  // namespace tdflow
