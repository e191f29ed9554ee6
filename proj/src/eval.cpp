#include "tdflow/eval.hpp"

#include "tdflow/dataset.hpp"
#include "tdflow/oracle.hpp"
#include "tdflow/transport.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>

namespace tdflow {

namespace {

constexpr std::uint64_t kTruthStream = 1000000;
constexpr std::uint64_t kModelStream = 2000000;
constexpr std::uint64_t kEmdStream = 3000000;

std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  return out;
}

// Exact Q(s, a0) when both the environment and the policy are tabular.
std::optional<Mat> exact_q(const Environment& env, const Policy& policy, const RewardFn& reward, double gamma) {
  const auto* tab = dynamic_cast<const TabularEnv*>(&env);
  const auto* pi = dynamic_cast<const TabularPolicyAdapter*>(&policy);
  if (tab == nullptr || pi == nullptr) return std::nullopt;
  Vec r(tab->mdp().n_states);
  for (int i = 0; i < r.size(); ++i) r[i] = reward(tab->state(i));
  return value_exact(tab->mdp(), pi->table(), r, gamma);
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

void EvalProtocolCfg::validate() const {
  require(n_source_states >= 1 && n_model_samples >= 1 && episode_length >= 1,
          "eval: counts must be at least 1");
  require(gamma >= 0.0 && gamma < 1.0, "eval: gamma must lie in [0, 1)");
  require(emd_subsample >= 1 && emd_repeats >= 1 && n_boot >= 1, "eval: EMD and bootstrap counts must be positive");
}

std::vector<SourcePoint> draw_sources(const Environment& env, const Policy& policy, int n, std::uint64_t seed) {
  Rng rng = make_rng(seed, 17);
  std::vector<SourcePoint> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vec s = env.sample_initial_state(rng);
    Vec a = policy.act(s, rng);
    out.push_back({std::move(s), std::move(a)});
  }
  return out;
}

GroundTruth ground_truth(const Environment& env, const Policy& policy, const SourcePoint& src, double gamma, int n,
                         int length, Rng& rng) {
  GroundTruth truth;
  truth.rollout.resize(length, env.state_dim());
  Vec s = env.step(src.s, src.a, rng);
  truth.rollout.row(0) = s.transpose();
  for (int k = 1; k < length; ++k) {
    s = env.step(s, policy.act(s, rng), rng);
    truth.rollout.row(k) = s.transpose();
  }
  truth.degenerate = length > 1 && (truth.rollout.rowwise() - truth.rollout.row(0)).cwiseAbs().maxCoeff() == 0.0;

  truth.samples.resize(n, env.state_dim());
  for (int i = 0; i < n; ++i) {
    int t = geometric_steps(gamma, rng);
    while (t > length) t = geometric_steps(gamma, rng);
    truth.samples.row(i) = truth.rollout.row(t - 1);
  }
  return truth;
}

Rng truth_rng(std::uint64_t seed, std::size_t source) { return make_rng(seed, kTruthStream + source); }

Conditioning source_conditioning(const SourcePoint& src, int n, int policy_index) {
  Conditioning cond{src.s.transpose().replicate(n, 1), src.a.transpose().replicate(n, 1), {}};
  if (policy_index >= 0) cond.policy.assign(static_cast<std::size_t>(n), policy_index);
  return cond;
}

double discounted_return(const Mat& rollout, const RewardFn& reward, double gamma) {
  double total = 0.0;
  double weight = 1.0;
  for (Eigen::Index k = 0; k < rollout.rows(); ++k) {
    total += weight * reward(rollout.row(k).transpose());
    weight *= gamma;
  }
  return total;
}

double value_from_samples(const Mat& samples, const RewardFn& reward, double gamma) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) sum += reward(samples.row(i).transpose());
  return sum / static_cast<double>(samples.rows()) / (1.0 - gamma);
}

EvalReport evaluate(const GhmModel& model, const Environment& env, const Policy& policy, const RewardFn& reward,
                    const EvalProtocolCfg& cfg, std::uint64_t seed, EvalMetrics metrics) {
  cfg.validate();
  require(model.dim() == env.state_dim(), "eval: model and environment dimensions differ");
  const bool want_nll = metrics.nll && model.has_likelihood();
  const bool want_v = metrics.mse_v && static_cast<bool>(reward);
  const auto q = want_v ? exact_q(env, policy, reward, cfg.gamma) : std::nullopt;
  const auto* tab = dynamic_cast<const TabularEnv*>(&env);

  EvalReport report;
  const auto sources = draw_sources(env, policy, cfg.n_source_states, seed);
  std::vector<double> sq_err;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& src = sources[i];
    Rng truth_stream = truth_rng(seed, i);
    Rng model_rng = make_rng(seed, kModelStream + i);
    Rng emd_rng = make_rng(seed, kEmdStream + i);
    const GroundTruth truth =
        ground_truth(env, policy, src, cfg.gamma, cfg.n_model_samples, cfg.episode_length, truth_stream);
    const Conditioning cond = source_conditioning(src, cfg.n_model_samples, cfg.policy_index);

    SourceMetrics m;
    m.s = src.s;
    m.degenerate_rollout = truth.degenerate;
    report.degenerate_rollouts += truth.degenerate ? 1 : 0;
    Mat samples;
    if (metrics.emd || want_v) samples = model.sample(cond, model_rng);
    if (!all_finite(samples)) throw NumericError("eval: model produced non-finite samples");
    m.emd = metrics.emd ? emd_subsampled(samples, truth.samples, cfg.emd_subsample, cfg.emd_repeats, emd_rng) : nan();
    if (want_nll) {
      const Vec lp = model.log_prob(cond, truth.samples);
      if (!lp.allFinite()) throw NumericError("eval: likelihood integration diverged");
      m.norm_nll = -lp.mean() / static_cast<double>(env.state_dim());
    } else {
      m.norm_nll = nan();
    }
    if (want_v) {
      m.v_model = value_from_samples(samples, reward, cfg.gamma);
      if (q) {
        m.v_true = (*q)(tab->index_of(src.s), tab->action_index(src.a));
      } else {
        m.v_true = discounted_return(truth.rollout, reward, cfg.gamma);
      }
      sq_err.push_back((m.v_model - m.v_true) * (m.v_model - m.v_true));
    } else {
      m.v_model = m.v_true = nan();
    }
    report.per_state.push_back(std::move(m));
  }

  auto average = [&](double SourceMetrics::*field) {
    double sum = 0.0;
    for (const auto& m : report.per_state) sum += m.*field;
    return sum / static_cast<double>(report.per_state.size());
  };
  report.emd = metrics.emd ? average(&SourceMetrics::emd) : nan();
  report.norm_nll = want_nll ? average(&SourceMetrics::norm_nll) : nan();
  if (want_v) {
    Rng boot = make_rng(seed, 18);
    const Estimate est = bootstrap_mean(sq_err, 0.95, cfg.n_boot, boot);
    report.mse_v = est.value;
    report.mse_v_ci = est.ci;
  } else {
    report.mse_v = nan();
    report.mse_v_ci = {nan(), nan()};
  }
  return report;
}

double eval_emd(const GhmModel& model, const Environment& env, const Policy& policy, const EvalProtocolCfg& cfg,
                std::uint64_t seed) {
  return evaluate(model, env, policy, {}, cfg, seed, {true, false, false}).emd;
}

double eval_nll(const GhmModel& model, const Environment& env, const Policy& policy, const EvalProtocolCfg& cfg,
                std::uint64_t seed) {
  require(model.has_likelihood(), "eval_nll: model has no likelihood");
  return evaluate(model, env, policy, {}, cfg, seed, {false, true, false}).norm_nll;
}

EvalReport eval_mse_v(const GhmModel& model, const Environment& env, const Policy& policy, const RewardFn& reward,
                      const EvalProtocolCfg& cfg, std::uint64_t seed) {
  require(static_cast<bool>(reward), "eval_mse_v: reward required");
  return evaluate(model, env, policy, reward, cfg, seed, {false, false, true});
}

std::string eval_report_json(const EvalReport& report) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["emd"] = num(report.emd);
  j["norm_nll"] = num(report.norm_nll);
  j["mse_v"] = num(report.mse_v);
  j["mse_v_ci"] = {num(report.mse_v_ci.lo), num(report.mse_v_ci.hi)};
  j["degenerate_rollouts"] = report.degenerate_rollouts;
  auto& rows = j["per_state"] = nlohmann::json::array();
  for (const auto& m : report.per_state) {
    rows.push_back({{"s", std::vector<double>(m.s.data(), m.s.data() + m.s.size())},
                    {"emd", num(m.emd)},
                    {"norm_nll", num(m.norm_nll)},
                    {"v_model", num(m.v_model)},
                    {"v_true", num(m.v_true)},
                    {"degenerate_rollout", m.degenerate_rollout}});
  }
  return j.dump(2);
}

void write_eval_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "source,state,emd,norm_nll,v_model,v_true,degenerate\n";
  for (std::size_t i = 0; i < report.per_state.size(); ++i) {
    const auto& m = report.per_state[i];
    out << i << ',';
    for (Eigen::Index k = 0; k < m.s.size(); ++k) out << (k ? ";" : "") << m.s[k];
    out << ',' << m.emd << ',' << m.norm_nll << ',' << m.v_model << ',' << m.v_true << ','
        << (m.degenerate_rollout ? 1 : 0) << '\n';
  }
}

std::vector<SweepRow> gamma_sweep(const std::vector<Algorithm>& algos, const std::vector<double>& gammas,
                                  const SweepRunner& run) {
  std::vector<SweepRow> rows;
  for (const auto algo : algos) {
    for (const double gamma : gammas) {
      SweepRow row;
      row.algorithm = algo;
      row.gamma = gamma;
      row.horizon = 1.0 / (1.0 - gamma);
      try {
        const EvalReport r = run(algo, gamma);
        row.mse_v = r.mse_v;
        row.emd = r.emd;
        row.norm_nll = r.norm_nll;
      } catch (const NumericError& e) {
        row.mse_v = row.emd = row.norm_nll = nan();
        row.status = std::string("diverged: ") + e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "algorithm,gamma,horizon,mse_v,emd,norm_nll,status\n";
  for (const auto& r : rows) {
    std::string status = r.status;
    for (auto& c : status) {
      if (c == ',' || c == '\n') c = ' ';
    }
    out << to_string(r.algorithm) << ',' << r.gamma << ',' << r.horizon << ',' << r.mse_v << ',' << r.emd << ','
        << r.norm_nll << ',' << status << '\n';
  }
}

}  // namespace tdflow
