#pragma once

#include "tdflow/network.hpp"

#include <cstdint>

namespace tdflow {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-4;
  double weight_decay = 1e-3;
};

/// Adam with decoupled weight decay: theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
class AdamW {
 public:
  AdamW(AdamWConfig cfg, const ModelParams& like);

  void step(ModelParams& params, const ModelParams& grads);
  std::int64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  const ModelParams& first_moment() const { return m_; }
  const ModelParams& second_moment() const { return v_; }

 private:
  AdamWConfig cfg_;
  ModelParams m_;
  ModelParams v_;
  std::int64_t t_ = 0;
};

/// Exponential moving average of parameters: target <- zeta * target + (1 - zeta) * online.
class EmaTracker {
 public:
  EmaTracker(double zeta, ModelParams initial);

  void update(const ModelParams& online);
  const ModelParams& target() const { return target_; }
  ModelParams& target() { return target_; }
  double zeta() const { return zeta_; }

 private:
  double zeta_;
  ModelParams target_;
};

/// Global L2 norm over all gradient tensors.
double global_norm(const ModelParams& grads);

}  // namespace tdflow
