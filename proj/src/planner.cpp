#include "tdflow/planner.hpp"

#include <set>

namespace tdflow {

void PolicyLibrary::validate() const {
  require(!policies.empty(), "policy library is empty");
  require(names.empty() || names.size() == policies.size(), "policy library: one name per policy");
  const std::set<std::string> unique(names.begin(), names.end());
  require(unique.size() == names.size(), "policy library: names must be unique");
  for (const auto& p : policies) require(p != nullptr, "policy library: null policy");
}

void GpiCfg::validate() const {
  require(n_ghm_samples >= 1, "gpi: n_ghm_samples must be at least 1");
  require(gamma >= 0.0 && gamma < 1.0, "gpi: gamma must lie in [0, 1)");
}

PerPolicyGhm::PerPolicyGhm(std::vector<GhmPtr> models) : models_(std::move(models)) {
  require(!models_.empty(), "PerPolicyGhm: no models");
  for (const auto& m : models_) require(m && m->dim() == models_.front()->dim(), "PerPolicyGhm: dimension mismatch");
}

Mat PerPolicyGhm::sample(const Conditioning& cond, Rng& rng) const {
  require(static_cast<Eigen::Index>(cond.policy.size()) == cond.rows(), "PerPolicyGhm: policy ids required");
  for (const int id : cond.policy) {
    require(id >= 0 && id < static_cast<int>(models_.size()), "PerPolicyGhm: policy id out of range");
  }
  Mat out(cond.rows(), dim());
  for (std::size_t id = 0; id < models_.size(); ++id) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < cond.rows(); ++i) {
      if (cond.policy[static_cast<std::size_t>(i)] == static_cast<int>(id)) rows.push_back(i);
    }
    if (rows.empty()) continue;
    const Mat part = models_[id]->sample(cond.select(rows), rng);
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(rows[k]) = part.row(static_cast<Eigen::Index>(k));
  }
  return out;
}

namespace {

double sampled_q(const GhmModel& model, const Vec& s, const Policy& policy, int policy_id, const RewardFn& reward,
                 double gamma, int n_samples, Rng& rng) {
  const SourcePoint src{s, policy.act(s, rng)};
  const Mat x = model.sample(source_conditioning(src, n_samples, policy_id), rng);
  return value_from_samples(x, reward, gamma);
}

}  // namespace

double q_estimate(const GhmModel& model, const Vec& s, const Policy& policy, int policy_id, const RewardFn& reward,
                  double gamma, int n_samples, std::uint64_t seed) {
  require(n_samples >= 1, "q_estimate: n_samples must be at least 1");
  Rng rng = make_rng(seed);
  return sampled_q(model, s, policy, policy_id, reward, gamma, n_samples, rng);
}

QFunction ghm_q_function(const GhmModel& model, const PolicyLibrary& library, const RewardFn& reward,
                         const GpiCfg& cfg) {
  library.validate();
  cfg.validate();
  return [&model, &library, reward, cfg](const Vec& s, int id, Rng& rng) {
    return sampled_q(model, s, *library.policies[static_cast<std::size_t>(id)], id, reward, cfg.gamma,
                     cfg.n_ghm_samples, rng);
  };
}

QFunction exact_q_function(std::shared_ptr<const TabularEnv> env, const std::vector<TabularPolicy>& policies,
                           const Vec& reward, double gamma) {
  require(!policies.empty(), "exact_q_function: no policies");
  std::vector<Vec> values;
  for (const auto& pi : policies) {
    const Mat q = value_exact(env->mdp(), pi, reward, gamma);
    values.push_back(q.cwiseProduct(pi.probs).rowwise().sum());
  }
  return [env, values = std::move(values)](const Vec& s, int id, Rng&) {
    const int si = env->index_of(s);
    require(si >= 0, "exact_q_function: state is not an embedded state");
    return values[static_cast<std::size_t>(id)][si];
  };
}

GpiDecision gpi_decide(const QFunction& q, const Vec& s, const PolicyLibrary& library, Rng& rng) {
  library.validate();
  GpiDecision d;
  for (std::size_t w = 0; w < library.size(); ++w) {
    d.q.push_back(q(s, static_cast<int>(w), rng));
    if (d.q.back() > d.q[static_cast<std::size_t>(d.policy)]) d.policy = static_cast<int>(w);
  }
  d.action = library.policies[static_cast<std::size_t>(d.policy)]->act(s, rng);
  return d;
}

Vec gpi_act(const GhmModel& model, const Vec& s, const PolicyLibrary& library, const RewardFn& reward,
            const GpiCfg& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return gpi_decide(ghm_q_function(model, library, reward, cfg), s, library, rng).action;
}

GpiEvaluation evaluate_gpi(const Environment& env, const QFunction& q, const PolicyLibrary& library,
                           const RewardFn& reward, int episodes, int length, std::uint64_t seed) {
  library.validate();
  require(episodes >= 2 && length >= 1, "evaluate_gpi: need at least two episodes of positive length");
  Rng start_rng = make_rng(seed, 1);
  std::vector<Vec> starts;
  for (int e = 0; e < episodes; ++e) starts.push_back(env.sample_initial_state(start_rng));

  // which = -1 runs GPI, otherwise library entry `which`.
  auto run = [&](int which) {
    std::vector<double> returns;
    for (int e = 0; e < episodes; ++e) {
      Rng rng = make_rng(seed, 1000 + static_cast<std::uint64_t>(e));
      Vec s = starts[static_cast<std::size_t>(e)];
      double total = 0.0;
      for (int k = 0; k < length; ++k) {
        const Vec a = which < 0 ? gpi_decide(q, s, library, rng).action
                                : library.policies[static_cast<std::size_t>(which)]->act(s, rng);
        s = env.step(s, a, rng);
        total += reward(s);
      }
      returns.push_back(total);
    }
    Rng boot = make_rng(seed, 2);
    return bootstrap_mean(returns, 0.95, 200, boot);
  };

  GpiEvaluation out;
  out.gpi = run(-1);
  for (std::size_t w = 0; w < library.size(); ++w) out.base.push_back(run(static_cast<int>(w)));
  return out;
}

}  // namespace tdflow
