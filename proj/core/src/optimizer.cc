#include "adaptvc/optimizer.h"

#include <cmath>

#include "adaptvc/error.h"

namespace adaptvc {

Scalar global_grad_norm(const std::vector<Parameter*>& params) {
  Scalar total = 0;
  for (const Parameter* p : params) {
    for (Scalar g : p->grad.values()) total += g * g;
  }
  return std::sqrt(total);
}

Adam::Adam(ParameterStore& store, AdamConfig config) : config_(config) {
  for (Parameter* p : store.all()) {
    if (!p->trainable) continue;
    slots_.push_back({p, Tensor::zeros_like(p->value), Tensor::zeros_like(p->value)});
  }
}

Scalar Adam::step() {
  std::vector<Parameter*> params;
  params.reserve(slots_.size());
  for (Slot& s : slots_) params.push_back(s.param);
  const Scalar norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw NumericalError("non-finite gradient norm");
  const Scalar clip =
      (config_.clip_norm > 0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

  ++step_;
  const Scalar bc1 = 1.0 - std::pow(config_.beta1, static_cast<Scalar>(step_));
  const Scalar bc2 = 1.0 - std::pow(config_.beta2, static_cast<Scalar>(step_));
  for (Slot& s : slots_) {
    Tensor& value = s.param->value;
    const Tensor& grad = s.param->grad;
    for (int64_t i = 0; i < value.size(); ++i) {
      const Scalar g = grad[i] * clip;
      s.m[i] = config_.beta1 * s.m[i] + (1 - config_.beta1) * g;
      s.v[i] = config_.beta2 * s.v[i] + (1 - config_.beta2) * g * g;
      const Scalar mhat = s.m[i] / bc1;
      const Scalar vhat = s.v[i] / bc2;
      value[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
  return norm;
}

}  // namespace adaptvc
