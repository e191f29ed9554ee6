#pragma once

#include "tdflow/eval.hpp"
#include "tdflow/ghm.hpp"
#include "tdflow/oracle.hpp"
#include "tdflow/stats.hpp"

#include <functional>
#include <string>
#include <vector>

namespace tdflow {

/// Finite, indexed policy family. Index i is the conditioning id fed to the GHM.
struct PolicyLibrary {
  std::vector<PolicyPtr> policies;
  std::vector<std::string> names;

  std::size_t size() const { return policies.size(); }
  void validate() const;
};

struct GpiCfg {
  int n_ghm_samples = 128;
  double gamma = 0.9;
  void validate() const;
};

/// Dispatches each conditioning row to the model of its policy id; for
/// per-policy models such as exact tabular samplers.
class PerPolicyGhm final : public GhmModel {
 public:
  explicit PerPolicyGhm(std::vector<GhmPtr> models);
  int dim() const override { return models_.front()->dim(); }
  Mat sample(const Conditioning& cond, Rng& rng) const override;

 private:
  std::vector<GhmPtr> models_;
};

/// (1 - gamma)^-1 times the mean reward of n model samples from (s, pi_id(s), id).
double q_estimate(const GhmModel& model, const Vec& s, const Policy& policy, int policy_id, const RewardFn& reward,
                  double gamma, int n_samples, std::uint64_t seed);

/// Q_w(s) for library entry w; the RNG covers any sampling it does.
using QFunction = std::function<double(const Vec& s, int policy_id, Rng& rng)>;

/// Q function backed by GHM samples. `model` and `library` must outlive it.
QFunction ghm_q_function(const GhmModel& model, const PolicyLibrary& library, const RewardFn& reward,
                         const GpiCfg& cfg);

/// Exact V^{pi_w}(s) = sum_a pi_w(a|s) Q^{pi_w}(s, a) from the oracle.
QFunction exact_q_function(std::shared_ptr<const TabularEnv> env, const std::vector<TabularPolicy>& policies,
                           const Vec& reward, double gamma);

struct GpiDecision {
  int policy = 0;
  Vec action;
  std::vector<double> q;
};

/// argmax_w Q_w(s) (lowest index on ties), then act with the winning policy.
GpiDecision gpi_decide(const QFunction& q, const Vec& s, const PolicyLibrary& library, Rng& rng);
Vec gpi_act(const GhmModel& model, const Vec& s, const PolicyLibrary& library, const RewardFn& reward,
            const GpiCfg& cfg, std::uint64_t seed);

struct GpiEvaluation {
  Estimate gpi;                 // mean undiscounted return with CI
  std::vector<Estimate> base;   // each library policy on the same start states
};

/// Episodes of `length` steps from env.sample_initial_state(); return = sum_k r(S_k), k = 1..length.
GpiEvaluation evaluate_gpi(const Environment& env, const QFunction& q, const PolicyLibrary& library,
                           const RewardFn& reward, int episodes, int length, std::uint64_t seed);

}  // namespace tdflow
