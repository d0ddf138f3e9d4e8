#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "adaptvc/autodiff.h"

namespace adaptvc {

struct GradCheckOptions {
  Scalar step = 1e-3;
  // Elements probed per parameter; <= 0 probes every element. Probed
  // positions are drawn from `seed` when a tensor is larger than the limit.
  int64_t max_elements_per_param = 0;
  uint64_t seed = 0;
};

struct GradCheckResult {
  Scalar max_relative_error = 0;
  std::string worst_parameter;
  int64_t worst_index = -1;
  Scalar analytic = 0;
  Scalar numeric = 0;
  int64_t probes = 0;
};

// Compares reverse-mode gradients of the scalar `f` against central
// differences. Error per element is |analytic - numeric| / max(1, |numeric|).
// `f` must be a pure function of the parameter values.
GradCheckResult grad_check(const std::function<Var(Tape&)>& f,
                           const std::vector<Parameter*>& params,
                           const GradCheckOptions& options = {});

}  // namespace adaptvc
