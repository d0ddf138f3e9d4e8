#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adaptvc/audio.h"
#include "adaptvc/autodiff.h"

namespace adaptvc {

struct ExtractorConfig {
  int num_layers = 12;
  int dim = 64;
  // Strided frontend: band filters of `band_kernel` taps at `band_stride`,
  // then energy pooling over `pool` positions. Total stride must equal the
  // mel hop so that frames align.
  int bands = 48;
  int band_kernel = 80;
  int band_stride = 20;
  int pool = 16;
  bool finetune = false;
  uint64_t seed = 0;

  int total_stride() const { return band_stride * pool; }
  void validate() const;
};

// L layers of [T x D] frame features.
struct LayerFeatures {
  std::vector<Tensor> layers;

  int64_t num_layers() const { return static_cast<int64_t>(layers.size()); }
  int64_t num_frames() const { return layers.empty() ? 0 : layers[0].rows(); }
  int64_t dim() const { return layers.empty() ? 0 : layers[0].cols(); }
};

// Randomly initialized layered feature stack standing in for a pretrained
// self-supervised speech model. Weights are frozen unless config.finetune.
class FeatureExtractor {
 public:
  static constexpr const char* kPrefix = "extractor.";

  FeatureExtractor(const ExtractorConfig& config, ParameterStore& store);

  const ExtractorConfig& config() const { return config_; }

  // Frame count for a clip of `num_samples` samples.
  int64_t frames_for(int64_t num_samples) const;

  LayerFeatures extract(const audio::AudioClip& clip) const;
  // Graph form; layer outputs carry gradients when fine-tuning is enabled.
  std::vector<Var> forward(Tape& tape, const audio::AudioClip& clip) const;

 private:
  ExtractorConfig config_;
  Parameter* band_weight_;
  Parameter* band_bias_;
  Parameter* proj_weight_;
  Parameter* proj_bias_;
  std::vector<Parameter*> block_weight_;
  std::vector<Parameter*> block_bias_;
  std::vector<Parameter*> block_conv_;
};

}  // namespace adaptvc
