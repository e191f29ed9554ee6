#include "tdflow/optim.hpp"

#include <cmath>

namespace tdflow {

AdamW::AdamW(AdamWConfig cfg, const ModelParams& like) : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {
  require(cfg_.lr > 0.0, "AdamW: lr must be positive");
  require(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0 && cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0,
          "AdamW: betas must lie in [0, 1)");
  require(cfg_.eps > 0.0 && cfg_.weight_decay >= 0.0, "AdamW: eps must be positive and weight_decay >= 0");
}

void AdamW::step(ModelParams& params, const ModelParams& grads) {
  require(params.same_shapes(m_) && grads.same_shapes(m_), "AdamW: shape mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = m_[i].array();
    auto v = v_[i].array();
    const auto g = grads[i].array();
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.square();
    auto p = params[i].array();
    p -= cfg_.lr * ((m / c1) / ((v / c2).sqrt() + cfg_.eps) + cfg_.weight_decay * p);
  }
}

EmaTracker::EmaTracker(double zeta, ModelParams initial) : zeta_(zeta), target_(std::move(initial)) {
  require(zeta_ >= 0.0 && zeta_ <= 1.0, "EmaTracker: zeta must lie in [0, 1]");
}

void EmaTracker::update(const ModelParams& online) {
  require(online.same_shapes(target_), "EmaTracker: shape mismatch");
  for (std::size_t i = 0; i < online.size(); ++i) {
    target_[i] = zeta_ * target_[i] + (1.0 - zeta_) * online[i];
  }
}

double global_norm(const ModelParams& grads) { return std::sqrt(grads.squared_norm()); }

}  // namespace tdflow
