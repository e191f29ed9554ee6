#pragma once

#include "tdflow/ghm.hpp"
#include "tdflow/losses.hpp"
#include "tdflow/stats.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace tdflow {

using RewardFn = std::function<double(const Vec&)>;

struct EvalProtocolCfg {
  int n_source_states = 64;
  int n_model_samples = 2048;
  int episode_length = 1000;
  double gamma = 0.9;
  int emd_subsample = 256;
  int emd_repeats = 8;
  int n_boot = 200;
  int policy_index = -1;  // conditioning index for policy-conditioned models
  void validate() const;
};

/// Evaluation source: the state and the first action a0 = pi(s).
struct SourcePoint {
  Vec s;
  Vec a;
};

struct SourceMetrics {
  Vec s;
  double emd = 0.0;
  double norm_nll = 0.0;  // NaN when not computed
  double v_model = 0.0;
  double v_true = 0.0;
  bool degenerate_rollout = false;
};

struct EvalReport {
  double emd = 0.0;
  double norm_nll = 0.0;  // NaN when the model has no likelihood or it was skipped
  double mse_v = 0.0;
  Interval mse_v_ci;
  int degenerate_rollouts = 0;
  std::vector<SourceMetrics> per_state;
};

/// Source states from env.sample_initial_state() with a0 drawn from `policy`.
std::vector<SourcePoint> draw_sources(const Environment& env, const Policy& policy, int n, std::uint64_t seed);

/// Ground truth for one source: a single rollout of `length` steps taking a0 first, and
/// `n` states resampled from it at T ~ Geometric(1 - gamma) truncated to the rollout.
struct GroundTruth {
  Mat rollout;  // length rows, S_1 .. S_L
  Mat samples;  // n rows
  bool degenerate = false;
};
GroundTruth ground_truth(const Environment& env, const Policy& policy, const SourcePoint& src, double gamma, int n,
                         int length, Rng& rng);

/// Stream used for source i's ground-truth rollout inside evaluate().
Rng truth_rng(std::uint64_t seed, std::size_t source);

/// Conditioning with `n` copies of the source row.
Conditioning source_conditioning(const SourcePoint& src, int n, int policy_index);

/// Discounted return sum_{k>=1} gamma^{k-1} r(S_k) of a rollout.
double discounted_return(const Mat& rollout, const RewardFn& reward, double gamma);

/// Q estimate (1 - gamma)^-1 mean r(x) over sample rows.
double value_from_samples(const Mat& samples, const RewardFn& reward, double gamma);

double eval_emd(const GhmModel& model, const Environment& env, const Policy& policy, const EvalProtocolCfg& cfg,
                std::uint64_t seed);
double eval_nll(const GhmModel& model, const Environment& env, const Policy& policy, const EvalProtocolCfg& cfg,
                std::uint64_t seed);
EvalReport eval_mse_v(const GhmModel& model, const Environment& env, const Policy& policy, const RewardFn& reward,
                      const EvalProtocolCfg& cfg, std::uint64_t seed);

struct EvalMetrics {
  bool emd = true;
  bool nll = true;
  bool mse_v = true;
};

/// All three metrics over the same sources and ground-truth draws. Deterministic given the seed.
/// Tabular environments with a tabular policy use the exact Q value as V_true.
EvalReport evaluate(const GhmModel& model, const Environment& env, const Policy& policy, const RewardFn& reward,
                    const EvalProtocolCfg& cfg, std::uint64_t seed, EvalMetrics metrics = {});

std::string eval_report_json(const EvalReport& report);
void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);

struct SweepRow {
  Algorithm algorithm = Algorithm::Td2Cfm;
  double gamma = 0.0;
  double horizon = 0.0;  // 1 / (1 - gamma)
  double mse_v = 0.0;
  double emd = 0.0;
  double norm_nll = 0.0;
  std::string status = "ok";  // "ok" or the divergence message
};

using SweepRunner = std::function<EvalReport(Algorithm, double gamma)>;

/// Runs every (algorithm, gamma) pair; a NumericError marks the row as diverged instead of aborting.
std::vector<SweepRow> gamma_sweep(const std::vector<Algorithm>& algos, const std::vector<double>& gammas,
                                  const SweepRunner& run);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace tdflow
