#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "adaptvc/feature_extractor.h"
#include "adaptvc/mel.h"
#include "adaptvc/rng.h"

namespace adaptvc {
namespace {

audio::AudioClip noise_clip(int64_t n, uint64_t seed) {
  Rng rng(seed);
  audio::AudioClip clip{std::vector<Scalar>(static_cast<size_t>(n)), 16000};
  for (auto& s : clip.samples) s = 0.1 * rng.normal();
  return clip;
}

Scalar cosine(const Tensor& a, const Tensor& b) {
  Scalar ab = 0, aa = 0, bb = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

TEST(Extractor, OneSecondGivesTwelveByFiftyBySixtyFour) {
  ParameterStore store;
  FeatureExtractor fx({}, store);
  const LayerFeatures f = fx.extract(noise_clip(16000, 1));
  EXPECT_EQ(f.num_layers(), 12);
  EXPECT_EQ(f.num_frames(), 50);
  EXPECT_EQ(f.dim(), 64);
  for (const Tensor& l : f.layers) EXPECT_EQ(l.shape(), (Shape{50, 64}));
}

TEST(Extractor, ZeroSignalGivesIdenticalFrames) {
  ParameterStore store;
  FeatureExtractor fx({}, store);
  const LayerFeatures f = fx.extract({std::vector<Scalar>(8000, 0.0), 16000});
  for (const Tensor& layer : f.layers) {
    for (int64_t t = 1; t < layer.rows(); ++t) {
      for (int64_t d = 0; d < layer.cols(); ++d) {
        EXPECT_DOUBLE_EQ(layer.at(t, d), layer.at(0, d));
      }
    }
  }
}

TEST(Extractor, RepeatCallsAreBitIdentical) {
  ParameterStore s1, s2;
  ExtractorConfig cfg;
  cfg.seed = 7;
  FeatureExtractor a(cfg, s1), b(cfg, s2);
  const auto clip = noise_clip(12345, 3);
  const LayerFeatures fa = a.extract(clip), fa2 = a.extract(clip), fb = b.extract(clip);
  for (size_t l = 0; l < fa.layers.size(); ++l) {
    EXPECT_EQ(fa.layers[l], fa2.layers[l]);
    EXPECT_EQ(fa.layers[l], fb.layers[l]);
  }
}

TEST(Extractor, SeedChangesWeights) {
  ParameterStore s1, s2;
  ExtractorConfig c1, c2;
  c2.seed = 1;
  FeatureExtractor a(c1, s1), b(c2, s2);
  const auto clip = noise_clip(4000, 3);
  EXPECT_FALSE(a.extract(clip).layers[0] == b.extract(clip).layers[0]);
}

TEST(Extractor, FramesMatchMelFrames) {
  ParameterStore store;
  FeatureExtractor fx({}, store);
  for (int64_t n : {320, 639, 640, 12800, 16000, 16319, 25601}) {
    const auto clip = noise_clip(n, static_cast<uint64_t>(n));
    EXPECT_EQ(fx.extract(clip).num_frames(), audio::mel_spectrogram(clip).num_frames()) << n;
  }
}

TEST(Extractor, LayersAreNotDegenerateCopies) {
  ParameterStore store;
  FeatureExtractor fx({}, store);
  Rng rng(11);
  audio::AudioClip clip{std::vector<Scalar>(16000), 16000};
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    clip.samples[i] = 0.3 * std::sin(2 * std::numbers::pi * 180 * i / 16000.0) + 0.02 * rng.normal();
  }
  const LayerFeatures f = fx.extract(clip);
  for (size_t a = 0; a < f.layers.size(); ++a) {
    for (size_t b = a + 1; b < f.layers.size(); ++b) {
      EXPECT_LT(cosine(f.layers[a], f.layers[b]), 0.999) << a << "," << b;
    }
  }
}

TEST(Extractor, FrozenByDefault) {
  ParameterStore store;
  FeatureExtractor fx({}, store);
  for (Parameter* p : store.group(FeatureExtractor::kPrefix)) EXPECT_FALSE(p->trainable) << p->name;
  ParameterStore tuned;
  ExtractorConfig cfg;
  cfg.finetune = true;
  FeatureExtractor fy(cfg, tuned);
  for (Parameter* p : tuned.group(FeatureExtractor::kPrefix)) EXPECT_TRUE(p->trainable);
}

TEST(Extractor, RejectsShortClip) {
  ParameterStore store;
  FeatureExtractor fx({}, store);
  EXPECT_THROW(fx.extract({std::vector<Scalar>(319, 0.1), 16000}), std::invalid_argument);
  EXPECT_THROW(fx.extract({std::vector<Scalar>(16000, 0.1), 22050}), std::invalid_argument);
}

TEST(Extractor, ConfigRejectsBadStride) {
  ExtractorConfig cfg;
  cfg.band_kernel = 10;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace adaptvc
