#include "adaptvc/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "adaptvc/error.h"

namespace adaptvc {
namespace {

Scalar evaluate(const std::function<Var(Tape&)>& f) {
  Tape tape(/*record_gradients=*/false);
  const Scalar v = f(tape).value().item();
  if (!std::isfinite(v)) throw NumericalError("grad_check: non-finite forward value");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Var(Tape&)>& f,
                           const std::vector<Parameter*>& params,
                           const GradCheckOptions& options) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    if (!std::isfinite(out.value().item())) {
      throw NumericalError("grad_check: non-finite forward value");
    }
    tape.backward(out);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  const Scalar h = options.step;
  for (size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    std::vector<int64_t> probe(static_cast<size_t>(p.value.size()));
    std::iota(probe.begin(), probe.end(), 0);
    if (options.max_elements_per_param > 0 &&
        static_cast<int64_t>(probe.size()) > options.max_elements_per_param) {
      std::shuffle(probe.begin(), probe.end(), rng);
      probe.resize(static_cast<size_t>(options.max_elements_per_param));
    }
    for (int64_t i : probe) {
      const Scalar original = p.value[i];
      p.value[i] = original + h;
      const Scalar plus = evaluate(f);
      p.value[i] = original - h;
      const Scalar minus = evaluate(f);
      p.value[i] = original;
      const Scalar numeric = (plus - minus) / (2 * h);
      const Scalar a = analytic[k][i];
      const Scalar err = std::abs(a - numeric) / std::max<Scalar>(1.0, std::abs(numeric));
      ++result.probes;
      if (result.worst_index < 0 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = p.name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace adaptvc
