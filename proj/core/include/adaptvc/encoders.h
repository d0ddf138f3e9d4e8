#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adaptvc/autodiff.h"
#include "adaptvc/feature_extractor.h"
#include "adaptvc/rng.h"

namespace adaptvc {

// softmax(logits) over layers.
Tensor adapter_weights(const Tensor& logits);

Tensor adapter_combine(const LayerFeatures& feats, const Tensor& logits);
Var adapter_combine(const std::vector<Var>& layers, Var logits);

struct ContentFeatures {
  Tensor vectors;                // [T x D]
  std::vector<int64_t> indices;  // empty when quantization is disabled
};

struct SpeakerFeatures {
  Tensor vectors;  // [T_ref x D], or [1 x D] when mean-pooled
};

// Nearest codebook row per frame by squared Euclidean distance; ties go to
// the lowest index.
std::vector<int64_t> nearest_codes(const Tensor& h, const Tensor& codebook);

ContentFeatures vq_quantize(const Tensor& h, const Tensor& codebook);

// Holds the code assignment and base values from the first evaluation so that
// repeated evaluations (finite differences) stay on one branch. Only used by
// gradient checks.
struct VqFreeze {
  bool captured = false;
  std::vector<int64_t> indices;
  Tensor h_base;
  Tensor selected_base;
};

struct QuantizeResult {
  Var quantized;
  std::vector<int64_t> indices;
  Tensor selected;  // codebook rows picked per frame (no gradient)
};

// Straight-through quantization. The downstream gradient passes to h
// unchanged and is scattered into the selected codebook rows.
QuantizeResult vq_quantize(Var h, Var codebook, VqFreeze* freeze = nullptr);

// MSE(h, stop_gradient(selected)).
Var commitment_loss(Var h, const Tensor& selected);

struct EncoderConfig {
  int codebook_size = 512;
  bool use_vq = true;
  bool use_adapter = true;
  // Dead codebook entries are reseeded after this many idle steps.
  int64_t dead_code_steps = 500;
};

// Content branch: adapter, then VQ.
class ContentEncoder {
 public:
  static constexpr const char* kPrefix = "content.";

  ContentEncoder(const EncoderConfig& config, int num_layers, int dim, ParameterStore& store);

  struct Output {
    Var h;           // adapter output before quantization
    Var features;    // quantized (or h when VQ is disabled)
    Var commitment;  // invalid when VQ is disabled
    std::vector<int64_t> indices;
  };

  Output forward(Tape& tape, const std::vector<Var>& layers, VqFreeze* freeze = nullptr) const;
  ContentFeatures encode(const LayerFeatures& feats) const;

  // Layer weights actually applied (one-hot on the last layer without adapters).
  Tensor layer_weights() const;

  Parameter& logits() { return *logits_; }
  Parameter& codebook() { return *codebook_; }
  const Parameter& codebook() const { return *codebook_; }

  // Fills the codebook with frames drawn from `frames` ([N x D]).
  void init_codebook(const Tensor& frames, Rng& rng);
  // Counts usage after a step and reseeds entries idle for too long with
  // random rows of `frames`. Returns the number of reseeded entries.
  int update_usage(const std::vector<int64_t>& used, const Tensor& frames, Rng& rng);
  const std::vector<int64_t>& idle_steps() const { return idle_; }
  void set_idle_steps(std::vector<int64_t> idle);

  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  int num_layers_;
  Parameter* logits_;
  Parameter* codebook_;
  std::vector<int64_t> idle_;
};

// Speaker branch: its own adapter, no quantization.
class SpeakerEncoder {
 public:
  static constexpr const char* kPrefix = "speaker.";

  SpeakerEncoder(const EncoderConfig& config, int num_layers, ParameterStore& store);

  Var forward(Tape& tape, const std::vector<Var>& layers, bool mean_pool = false) const;
  SpeakerFeatures encode(const LayerFeatures& feats, bool mean_pool = false) const;

  // One-hot on the first layer without adapters.
  Tensor layer_weights() const;
  Parameter& logits() { return *logits_; }

 private:
  EncoderConfig config_;
  int num_layers_;
  Parameter* logits_;
};

}  // namespace adaptvc
