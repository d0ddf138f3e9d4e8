#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "adaptvc/audio.h"
#include "adaptvc/decoder.h"
#include "adaptvc/encoders.h"
#include "adaptvc/feature_extractor.h"
#include "adaptvc/flow.h"
#include "adaptvc/mel.h"

namespace adaptvc {

struct LossWeights {
  Scalar commit = 1.0;
  Scalar prior = 1.0;
  Scalar dec = 1.0;
};

struct OptimConfig {
  Scalar lr = 1e-3;
  int batch_size = 4;
  int steps = 2000;
  Scalar clip_norm = 1.0;
};

// Everything needed to rebuild a model and its training run.
struct ModelConfig {
  uint64_t seed = 0;
  ExtractorConfig extractor;
  EncoderConfig encoder;
  DecoderConfig decoder;
  FlowConfig flow;
  audio::MelConfig mel;
  OptimConfig optim;
  LossWeights loss;

  void validate() const;

  std::string to_json() const;
  // Keys absent from `text` keep their defaults; unknown keys are rejected.
  static ModelConfig from_json(const std::string& text);
  // Applies "a.b.c=value" overrides; the key must already exist.
  void apply_override(const std::string& assignment);
};

ModelConfig load_config(const std::string& path);

class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  const FeatureExtractor& extractor() const { return *extractor_; }
  ContentEncoder& content_encoder() { return *content_; }
  const ContentEncoder& content_encoder() const { return *content_; }
  SpeakerEncoder& speaker_encoder() { return *speaker_; }
  const SpeakerEncoder& speaker_encoder() const { return *speaker_; }
  const PriorFusion& fusion() const { return *fusion_; }
  const VectorFieldNet& decoder() const { return *decoder_; }

  // Speaker features are mean-pooled for the SALN and mean-add variants.
  bool pooled_speaker() const;

  LayerFeatures features(const audio::AudioClip& clip) const;
  ContentFeatures encode_content(const audio::AudioClip& clip) const;
  SpeakerFeatures encode_speaker(const audio::AudioClip& clip) const;
  Tensor fuse_prior(const ContentFeatures& content, const SpeakerFeatures& speaker) const;

  // Content from `source`, speaker from `reference`, N-step sampling.
  audio::MelSpectrogram convert(const audio::AudioClip& source,
                                const audio::AudioClip& reference, int steps, Rng& rng) const;

 private:
  ModelConfig config_;
  ParameterStore store_;
  std::unique_ptr<FeatureExtractor> extractor_;
  std::unique_ptr<ContentEncoder> content_;
  std::unique_ptr<SpeakerEncoder> speaker_;
  std::unique_ptr<PriorFusion> fusion_;
  std::unique_ptr<VectorFieldNet> decoder_;
};

}  // namespace adaptvc
