#pragma once

#include <functional>
#include <string>

#include "adaptvc/autodiff.h"
#include "adaptvc/rng.h"

namespace adaptvc {

enum class FlowSource { kStandard, kPriorMean };

std::string to_string(FlowSource source);
FlowSource flow_source_from_string(const std::string& name);

struct FlowConfig {
  Scalar sigma_min = 1e-4;
  int steps = 10;
  FlowSource source = FlowSource::kStandard;

  void validate() const;
};

// (1 - (1 - sigma_min) t) x0 + t x1
Tensor ot_flow_point(const Tensor& x0, const Tensor& x1, Scalar t, Scalar sigma_min);
// x1 - (1 - sigma_min) x0
Tensor ot_target_field(const Tensor& x0, const Tensor& x1, Scalar sigma_min);

// Vector field on the tape. `t` holds one flow time per row of x_t.
using TapeField = std::function<Var(Tape& tape, Var x_t, const Tensor& t)>;
// Inference form with a single flow time.
using Field = std::function<Tensor(const Tensor& x_t, Scalar t)>;

struct CfmOptions {
  // Draw an independent t for every row (one example per row) instead of one
  // t for the whole matrix.
  bool time_per_row = false;
  // Mean of the source distribution when FlowSource::kPriorMean is used.
  const Tensor* source_mean = nullptr;
};

// Draws t ~ U[0,1] and x0 from the source distribution and returns
// mean((v(phi_t) - u_t)^2).
Var cfm_loss(Tape& tape, const Tensor& x1, const TapeField& field, Rng& rng,
             const FlowConfig& config, const CfmOptions& options = {});

// Source sample x0 for a [rows x cols] target.
Tensor draw_source(int64_t rows, int64_t cols, Rng& rng, const FlowConfig& config,
                   const Tensor* source_mean = nullptr);

// N-step Euler integration from x0 over t in [0, 1].
Tensor euler_integrate(Tensor x0, int steps, const Field& field);

// Small time-conditioned MLP field for low-dimensional problems:
// [x, sin/cos(t)] -> hidden -> hidden -> dim, SiLU activations.
class MlpField {
 public:
  MlpField(int dim, int hidden, int time_features, ParameterStore& store, Rng& rng,
           const std::string& prefix = "mlp.");

  Var operator()(Tape& tape, Var x_t, const Tensor& t) const;
  Tensor evaluate(const Tensor& x_t, Scalar t) const;

 private:
  Tensor time_features(const Tensor& t) const;

  int time_features_;
  Parameter* w1_;
  Parameter* b1_;
  Parameter* w2_;
  Parameter* b2_;
  Parameter* w3_;
  Parameter* b3_;
};

// Sinusoidal embedding of t: [sin(s t f_i), cos(s t f_i)] with geometric
// frequencies f_i, s = scale. Returns [rows x dim].
Tensor time_embedding(const Tensor& t, int dim, Scalar scale);

}  // namespace adaptvc
