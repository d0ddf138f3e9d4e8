#pragma once

#include <vector>

#include "adaptvc/autodiff.h"

namespace adaptvc {

struct AdamConfig {
  Scalar learning_rate = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar epsilon = 1e-8;
  // Global L2 gradient-norm clip; <= 0 disables clipping.
  Scalar clip_norm = 1.0;
};

// Adaptive-moment optimizer over the trainable parameters of a store.
class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig config);

  // Applies one update from the accumulated gradients and returns the
  // pre-clip global gradient norm.
  Scalar step();
  int64_t steps_taken() const { return step_; }

 private:
  struct Slot {
    Parameter* param;
    Tensor m;
    Tensor v;
  };
  AdamConfig config_;
  std::vector<Slot> slots_;
  int64_t step_ = 0;
};

Scalar global_grad_norm(const std::vector<Parameter*>& params);

}  // namespace adaptvc
