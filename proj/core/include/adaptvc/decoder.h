#pragma once

#include <string>
#include <vector>

#include "adaptvc/autodiff.h"
#include "adaptvc/flow.h"
#include "adaptvc/rng.h"

namespace adaptvc {

enum class Conditioning { kCrossAttention, kSaln, kMeanAdd };

std::string to_string(Conditioning c);
Conditioning conditioning_from_string(const std::string& name);

struct DecoderConfig {
  int mel_bins = 80;
  int feature_dim = 64;
  int hidden = 128;
  int levels = 2;
  int blocks_per_level = 2;
  int heads = 2;
  int time_dim = 64;
  int ff_mult = 2;
  Conditioning conditioning = Conditioning::kCrossAttention;

  void validate() const;
};

// Negative log-likelihood of x under N(mu, I), summed over frames:
// sum_i [bins/2 ln(2 pi) + 0.5 |x_i - mu_i|^2].
Var prior_loss(Var mu, const Tensor& x);
Scalar prior_loss(const Tensor& mu, const Tensor& x);
Scalar prior_loss_constant(int64_t frames, int64_t bins);

// Per-frame layer norm, then row-wise scale and shift projected from the
// pooled style vector ([1 x S]).
Var saln_condition(Var features, Var style, Var scale_weight, Var scale_bias, Var shift_weight,
                   Var shift_bias);

// Receives every attention probability matrix computed in a forward pass.
struct AttentionProbe {
  std::vector<Tensor> weights;
};

// Single-head scaled dot-product attention of queries over keys/values.
Var attention(Var q, Var k, Var v, AttentionProbe* probe = nullptr);

// Fuses content (queries) and speaker features (keys/values) into the prior
// mean, [T x mel_bins].
class PriorFusion {
 public:
  static constexpr const char* kPrefix = "fusion.";

  PriorFusion(const DecoderConfig& config, ParameterStore& store, Rng& rng);

  Var forward(Tape& tape, Var content, Var speaker, AttentionProbe* probe = nullptr) const;
  Tensor fuse(const Tensor& content, const Tensor& speaker) const;

 private:
  DecoderConfig config_;
  Parameter* q_;
  Parameter* k_;
  Parameter* v_;
  Parameter* proj_w_;
  Parameter* proj_b_;
  // SALN / mean-add variants.
  Parameter* style_a_w_ = nullptr;
  Parameter* style_a_b_ = nullptr;
  Parameter* style_b_w_ = nullptr;
  Parameter* style_b_b_ = nullptr;
};

// Transformer U-Net vector field v(x_t | mu, h_spk, t).
class VectorFieldNet {
 public:
  static constexpr const char* kPrefix = "decoder.";

  VectorFieldNet(const DecoderConfig& config, ParameterStore& store, Rng& rng);

  // Speaker-side values computed once per forward pass and shared by blocks.
  struct Context {
    std::vector<Var> keys;    // per head, [T_ref x head_dim]
    std::vector<Var> values;  // per head
    Var style;                // pooled speaker features, [1 x D]
  };
  Context prepare(Tape& tape, Var h_spk) const;

  Var forward(Tape& tape, Var x_t, Scalar t, Var mu, const Context& ctx,
              AttentionProbe* probe = nullptr) const;
  Var forward(Tape& tape, Var x_t, Scalar t, Var mu, Var h_spk) const;
  Tensor evaluate(const Tensor& x_t, Scalar t, const Tensor& mu, const Tensor& h_spk) const;

  // Euler sampling from the source distribution; returns [T x mel_bins].
  Tensor sample(const Tensor& mu, const Tensor& h_spk, const FlowConfig& flow, Rng& rng) const;

  const DecoderConfig& config() const { return config_; }

 private:
  struct Block {
    Parameter* conv_w;
    Parameter* conv_b;
    Parameter* time_w;
    Parameter* time_b;
    Parameter* cond_w = nullptr;  // attention query / SALN scale / mean-add projection
    Parameter* cond_b = nullptr;
    Parameter* cond2_w = nullptr;  // attention output / SALN shift
    Parameter* cond2_b = nullptr;
    Parameter* ff1_w;
    Parameter* ff1_b;
    Parameter* ff2_w;
    Parameter* ff2_b;
    Parameter* merge_w = nullptr;  // up-path skip concatenation
    Parameter* merge_b = nullptr;
  };

  Block make_block(const std::string& name, bool skip, ParameterStore& store, Rng& rng);
  Var run_block(Tape& tape, const Block& b, Var h, Var temb, const Context& ctx,
                AttentionProbe* probe) const;

  DecoderConfig config_;
  Parameter* in_w_;
  Parameter* in_b_;
  Parameter* t1_w_;
  Parameter* t1_b_;
  Parameter* t2_w_;
  Parameter* t2_b_;
  Parameter* k_w_ = nullptr;
  Parameter* v_w_ = nullptr;
  std::vector<Block> down_;
  std::vector<Parameter*> down_w_, down_b_;
  Block mid_;
  std::vector<Block> up_;
  std::vector<Parameter*> up_w_, up_b_;
  Parameter* out_w_;
  Parameter* out_b_;
};

}  // namespace adaptvc
