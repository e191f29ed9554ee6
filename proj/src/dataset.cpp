#include "tdflow/dataset.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace tdflow {

static_assert(std::endian::native == std::endian::little, "dataset and checkpoint formats assume little endian");

void TrajectoryDataset::validate() const {
  require(s.rows() >= 1, "dataset: must contain at least one transition");
  require(a.rows() == s.rows() && s_next.rows() == s.rows(), "dataset: row counts differ");
  require(s_next.cols() == s.cols(), "dataset: state and next-state dims differ");
}

Mat rollout(const Environment& env, const Policy& policy, const Vec& s0, int horizon, Rng& rng) {
  require(horizon >= 1, "rollout: horizon must be >= 1");
  require(s0.size() == env.state_dim() && env.contains(s0), "rollout: invalid initial state");
  Mat out(horizon + 1, env.state_dim());
  Vec s = s0;
  out.row(0) = s.transpose();
  for (int k = 1; k <= horizon; ++k) {
    const Vec a = policy.act(s, rng);
    s = env.step(s, a, rng);
    out.row(k) = s.transpose();
  }
  return out;
}

Mat rollout(const Environment& env, const Policy& policy, const Vec& s0, int horizon, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return rollout(env, policy, s0, horizon, rng);
}

int geometric_steps(double gamma, Rng& rng) {
  require(gamma >= 0.0 && gamma < 1.0, "geometric: gamma must lie in [0, 1)");
  int steps = 1;
  while (uniform01(rng) < gamma) {
    ++steps;
  }
  return steps;
}

GeometricDraw geometric_sample_with_time(const Environment& env, const Policy& policy, const Vec& s0, const Vec& a0,
                                         double gamma, Rng& rng) {
  const int steps = geometric_steps(gamma, rng);
  Vec s = env.step(s0, a0, rng);
  for (int k = 1; k < steps; ++k) {
    s = env.step(s, policy.act(s, rng), rng);
  }
  return {std::move(s), steps};
}

Vec geometric_sample(const Environment& env, const Policy& policy, const Vec& s0, const Vec& a0, double gamma,
                     Rng& rng) {
  return geometric_sample_with_time(env, policy, s0, a0, gamma, rng).state;
}

TrajectoryDataset collect_dataset(const Environment& env, const Policy& behavior, std::size_t n_transitions,
                                  std::uint64_t seed, int episode_length) {
  require(n_transitions >= 1, "collect_dataset: n_transitions must be >= 1");
  require(episode_length >= 1, "collect_dataset: episode_length must be >= 1");
  Rng rng = make_rng(seed);
  TrajectoryDataset ds;
  ds.env_id = env.id();
  ds.source_seed = seed;
  const auto n = static_cast<Eigen::Index>(n_transitions);
  ds.s.resize(n, env.state_dim());
  ds.a.resize(n, env.action_dim());
  ds.s_next.resize(n, env.state_dim());
  Vec s = env.sample_initial_state(rng);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i > 0 && i % episode_length == 0) {
      s = env.sample_initial_state(rng);
    }
    const Vec a = behavior.act(s, rng);
    const Vec next = env.step(s, a, rng);
    ds.s.row(i) = s.transpose();
    ds.a.row(i) = a.transpose();
    ds.s_next.row(i) = next.transpose();
    s = next;
  }
  return ds;
}

TrajectoryDataset collect_geometric_dataset(const Environment& env, const Policy& behavior, const Policy& policy,
                                            double gamma, std::size_t n_transitions, std::uint64_t seed,
                                            int episode_length) {
  TrajectoryDataset ds = collect_dataset(env, behavior, n_transitions, seed, episode_length);
  Rng rng = make_rng(seed, 1);
  for (Eigen::Index i = 0; i < ds.s.rows(); ++i) {
    ds.s_next.row(i) =
        geometric_sample(env, policy, ds.s.row(i).transpose(), ds.a.row(i).transpose(), gamma, rng).transpose();
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[8] = {'T', 'D', 'F', 'L', 'O', 'W', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) {
    throw IoError("dataset: truncated file");
  }
  return v;
}

}  // namespace

void save_dataset(const TrajectoryDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw IoError("dataset: cannot open " + path.string() + " for writing");
  }
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);
  put(os, static_cast<std::uint32_t>(ds.env_id.size()));
  os.write(ds.env_id.data(), static_cast<std::streamsize>(ds.env_id.size()));
  put(os, static_cast<std::uint32_t>(ds.state_dim()));
  put(os, static_cast<std::uint32_t>(ds.action_dim()));
  put(os, static_cast<std::uint64_t>(ds.size()));
  put(os, ds.source_seed);
  for (Eigen::Index i = 0; i < ds.s.rows(); ++i) {
    os.write(reinterpret_cast<const char*>(ds.s.row(i).data()), ds.s.cols() * 8);
    os.write(reinterpret_cast<const char*>(ds.a.row(i).data()), ds.a.cols() * 8);
    os.write(reinterpret_cast<const char*>(ds.s_next.row(i).data()), ds.s_next.cols() * 8);
  }
  if (!os) {
    throw IoError("dataset: write failed for " + path.string());
  }

  nlohmann::json meta = {{"format", "TDFLOWDS"},     {"version", kVersion},          {"env_id", ds.env_id},
                         {"state_dim", ds.state_dim()}, {"action_dim", ds.action_dim()}, {"count", ds.size()},
                         {"source_seed", ds.source_seed}};
  std::ofstream js(path.string() + ".json");
  if (!js) {
    throw IoError("dataset: cannot write sidecar for " + path.string());
  }
  js << meta.dump(2) << "\n";
}

TrajectoryDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw IoError("dataset: cannot open " + path.string());
  }
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("dataset: bad magic in " + path.string());
  }
  if (get<std::uint32_t>(is) != kVersion) {
    throw IoError("dataset: unsupported version in " + path.string());
  }
  TrajectoryDataset ds;
  ds.env_id.resize(get<std::uint32_t>(is));
  is.read(ds.env_id.data(), static_cast<std::streamsize>(ds.env_id.size()));
  const auto sd = get<std::uint32_t>(is);
  const auto ad = get<std::uint32_t>(is);
  const auto count = get<std::uint64_t>(is);
  ds.source_seed = get<std::uint64_t>(is);
  const auto n = static_cast<Eigen::Index>(count);
  ds.s.resize(n, sd);
  ds.a.resize(n, ad);
  ds.s_next.resize(n, sd);
  for (Eigen::Index i = 0; i < n; ++i) {
    is.read(reinterpret_cast<char*>(ds.s.row(i).data()), static_cast<std::streamsize>(sd) * 8);
    is.read(reinterpret_cast<char*>(ds.a.row(i).data()), static_cast<std::streamsize>(ad) * 8);
    is.read(reinterpret_cast<char*>(ds.s_next.row(i).data()), static_cast<std::streamsize>(sd) * 8);
  }
  if (!is) {
    throw IoError("dataset: truncated records in " + path.string());
  }
  ds.validate();
  return ds;
}

}  // namespace tdflow
