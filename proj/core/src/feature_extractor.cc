#include "adaptvc/feature_extractor.h"

#include <cmath>
#include <stdexcept>

#include "adaptvc/ops.h"
#include "adaptvc/rng.h"

namespace adaptvc {

void ExtractorConfig::validate() const {
  if (num_layers < 1 || dim < 1 || bands < 1) {
    throw std::invalid_argument("extractor: layers, dim and bands must be positive");
  }
  if (band_stride < 1 || pool < 1 || band_kernel < band_stride ||
      (band_kernel - band_stride) % 2 != 0) {
    throw std::invalid_argument("extractor: band kernel must be >= stride with even overhang");
  }
}

FeatureExtractor::FeatureExtractor(const ExtractorConfig& config, ParameterStore& store)
    : config_(config) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, "extractor"));
  const bool trainable = config_.finetune;
  const std::string p = kPrefix;
  const int d = config_.dim;
  band_weight_ = &store.add(p + "band.weight",
                            rng.normal_tensor({config_.band_kernel, config_.bands},
                                              1.0 / std::sqrt(config_.band_kernel)),
                            trainable);
  band_bias_ = &store.add(p + "band.bias", rng.normal_tensor({config_.bands}, 0.01), trainable);
  proj_weight_ = &store.add(p + "proj.weight",
                            rng.normal_tensor({config_.bands, d}, 1.0 / std::sqrt(config_.bands)),
                            trainable);
  proj_bias_ = &store.add(p + "proj.bias", rng.normal_tensor({d}, 0.1), trainable);
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string b = p + "block" + (l < 10 ? "0" : "") + std::to_string(l) + ".";
    block_weight_.push_back(
        &store.add(b + "weight", rng.normal_tensor({d, d}, 1.0 / std::sqrt(d)), trainable));
    block_bias_.push_back(&store.add(b + "bias", rng.normal_tensor({d}, 0.1), trainable));
    block_conv_.push_back(
        &store.add(b + "conv", rng.normal_tensor({3, d}, 1.0 / std::sqrt(3.0)), trainable));
  }
}

int64_t FeatureExtractor::frames_for(int64_t num_samples) const {
  return num_samples / config_.total_stride();
}

std::vector<Var> FeatureExtractor::forward(Tape& tape, const audio::AudioClip& clip) const {
  const int64_t frames = frames_for(static_cast<int64_t>(clip.samples.size()));
  if (frames < 1) {
    throw std::invalid_argument("extract: clip of " + std::to_string(clip.samples.size()) +
                                " samples is shorter than one frame (" +
                                std::to_string(config_.total_stride()) + ")");
  }
  const int64_t used = frames * config_.total_stride();
  Tensor wave({used, 1});
  std::copy(clip.samples.begin(), clip.samples.begin() + used, wave.data());

  using namespace ops;
  const int64_t overhang = (config_.band_kernel - config_.band_stride) / 2;
  Var x = tape.constant(std::move(wave));
  Var patches = im2col(x, config_.band_kernel, config_.band_stride, overhang, overhang);
  Var bands = linear(patches, tape.param(*band_weight_), tape.param(*band_bias_));
  Var energy = mean_pool_rows(square(bands), config_.pool);
  Var h = linear(layer_norm(ops::log(energy, 1e-6)), tape.param(*proj_weight_),
                 tape.param(*proj_bias_));

  std::vector<Var> layers;
  layers.reserve(static_cast<size_t>(config_.num_layers));
  for (int l = 0; l < config_.num_layers; ++l) {
    Var u = ops::tanh(
        linear(h, tape.param(*block_weight_[static_cast<size_t>(l)]),
               tape.param(*block_bias_[static_cast<size_t>(l)])));
    h = add(h, depthwise_conv(u, tape.param(*block_conv_[static_cast<size_t>(l)]),
                              Padding::kEdge));
    layers.push_back(h);
  }
  return layers;
}

LayerFeatures FeatureExtractor::extract(const audio::AudioClip& clip) const {
  if (clip.sample_rate != 16000) {
    throw std::invalid_argument("extract: expected a 16 kHz clip, got " +
                                std::to_string(clip.sample_rate) + " Hz");
  }
  Tape tape(/*record_gradients=*/false);
  LayerFeatures out;
  for (const Var& v : forward(tape, clip)) out.layers.push_back(v.value());
  return out;
}

}  // namespace adaptvc
