#include "aflab/compute/optimizer.h"

#include <cmath>

namespace aflab {

AdamW::AdamW(ParameterList params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  for (const Parameter* p : params_) {
    m_.push_back(Tensor::ZerosLike(p->value));
    v_.push_back(Tensor::ZerosLike(p->value));
  }
}

void AdamW::Step(double lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (!p.trainable) continue;
    const bool decay = p.value.rows() > 1;
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + config_.epsilon);
      if (decay) w[j] -= lr * config_.weight_decay * w[j];
      w[j] -= lr * update;
    }
  }
}

}  // namespace aflab
