#include "adaptvc/flow.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "adaptvc/ops.h"

namespace adaptvc {
namespace {

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
}

}  // namespace

std::string to_string(FlowSource source) {
  return source == FlowSource::kStandard ? "standard" : "prior-mean";
}

FlowSource flow_source_from_string(const std::string& name) {
  if (name == "standard") return FlowSource::kStandard;
  if (name == "prior-mean") return FlowSource::kPriorMean;
  throw std::invalid_argument("unknown flow source '" + name + "' (expected standard|prior-mean)");
}

void FlowConfig::validate() const {
  if (!(sigma_min >= 0 && sigma_min < 1)) {
    throw std::invalid_argument("sigma_min must lie in [0, 1), got " + std::to_string(sigma_min));
  }
  if (steps < 1) throw std::invalid_argument("sampling steps must be >= 1, got " + std::to_string(steps));
}

Tensor ot_flow_point(const Tensor& x0, const Tensor& x1, Scalar t, Scalar sigma_min) {
  require_same("ot_flow_point", x0, x1);
  if (!(t >= 0 && t <= 1)) {
    throw std::invalid_argument("ot_flow_point: t must lie in [0, 1], got " + std::to_string(t));
  }
  Tensor out(x0.shape());
  const Scalar a = 1 - (1 - sigma_min) * t;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + t * x1[i];
  return out;
}

Tensor ot_target_field(const Tensor& x0, const Tensor& x1, Scalar sigma_min) {
  require_same("ot_target_field", x0, x1);
  Tensor out(x0.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = x1[i] - (1 - sigma_min) * x0[i];
  return out;
}

Tensor draw_source(int64_t rows, int64_t cols, Rng& rng, const FlowConfig& config,
                   const Tensor* source_mean) {
  Tensor x0 = rng.normal_tensor({rows, cols});
  if (config.source == FlowSource::kPriorMean) {
    if (!source_mean) throw std::invalid_argument("prior-mean flow source needs a mean");
    require_same("draw_source", x0, *source_mean);
    x0 += *source_mean;
  }
  return x0;
}

Var cfm_loss(Tape& tape, const Tensor& x1, const TapeField& field, Rng& rng,
             const FlowConfig& config, const CfmOptions& options) {
  config.validate();
  const int64_t rows = x1.rows(), cols = x1.cols();
  Tensor t({rows});
  if (options.time_per_row) {
    for (int64_t r = 0; r < rows; ++r) t[r] = rng.uniform();
  } else {
    const Scalar shared = rng.uniform();
    for (int64_t r = 0; r < rows; ++r) t[r] = shared;
  }
  const Tensor x0 = draw_source(rows, cols, rng, config, options.source_mean).reshaped(x1.shape());
  Tensor phi(x1.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const Scalar a = 1 - (1 - config.sigma_min) * t[r];
    for (int64_t c = 0; c < cols; ++c) {
      const int64_t i = r * cols + c;
      phi[i] = a * x0[i] + t[r] * x1[i];
    }
  }
  const Tensor u = ot_target_field(x0, x1, config.sigma_min);
  Var v = field(tape, tape.constant(std::move(phi)), t);
  return ops::mse(v, tape.constant(u));
}

Tensor euler_integrate(Tensor x, int steps, const Field& field) {
  if (steps < 1) throw std::invalid_argument("sampling steps must be >= 1, got " + std::to_string(steps));
  const Scalar dt = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    const Tensor v = field(x, static_cast<Scalar>(k) / steps);
    if (v.shape() != x.shape()) {
      throw std::invalid_argument("vector field returned " + shape_string(v.shape()) +
                                  " for state " + shape_string(x.shape()));
    }
    for (int64_t i = 0; i < x.size(); ++i) x[i] += dt * v[i];
  }
  return x;
}

Tensor time_embedding(const Tensor& t, int dim, Scalar scale) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time embedding dim must be even");
  const int half = dim / 2;
  Tensor out({t.size(), dim});
  for (int64_t r = 0; r < t.size(); ++r) {
    for (int i = 0; i < half; ++i) {
      const Scalar freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
      const Scalar arg = scale * t[r] * freq;
      out.at(r, i) = std::sin(arg);
      out.at(r, half + i) = std::cos(arg);
    }
  }
  return out;
}

MlpField::MlpField(int dim, int hidden, int time_features, ParameterStore& store, Rng& rng,
                   const std::string& prefix)
    : time_features_(time_features) {
  const int in = dim + time_features;
  w1_ = &store.add(prefix + "w1", rng.normal_tensor({in, hidden}, 1.0 / std::sqrt(in)));
  b1_ = &store.add(prefix + "b1", Tensor({hidden}));
  w2_ = &store.add(prefix + "w2", rng.normal_tensor({hidden, hidden}, 1.0 / std::sqrt(hidden)));
  b2_ = &store.add(prefix + "b2", Tensor({hidden}));
  w3_ = &store.add(prefix + "w3", rng.normal_tensor({hidden, dim}, 1.0 / std::sqrt(hidden)));
  b3_ = &store.add(prefix + "b3", Tensor({dim}));
}

Tensor MlpField::time_features(const Tensor& t) const {
  return time_embedding(t, time_features_, 4.0);
}

Var MlpField::operator()(Tape& tape, Var x_t, const Tensor& t) const {
  using namespace ops;
  Var in = concat_cols({x_t, tape.constant(time_features(t))});
  Var h = silu(linear(in, tape.param(*w1_), tape.param(*b1_)));
  h = silu(linear(h, tape.param(*w2_), tape.param(*b2_)));
  return linear(h, tape.param(*w3_), tape.param(*b3_));
}

Tensor MlpField::evaluate(const Tensor& x_t, Scalar t) const {
  Tape tape(false);
  Tensor times({x_t.rows()}, t);
  return (*this)(tape, tape.constant(x_t), times).value();
}

}  // namespace adaptvc
