#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "adaptvc/corpus.h"
#include "adaptvc/mel.h"
#include "adaptvc/model.h"

namespace adaptvc {

inline constexpr int kEmbeddingDim = 32;

struct SpeakerEmbedding {
  std::array<Scalar, kEmbeddingDim> vector{};
  bool unvoiced = false;  // no voiced frames; pitch statistics set to 0
};

// Autocorrelation pitch track, one value per 10 ms hop; 0 marks unvoiced.
std::vector<Scalar> track_f0(const audio::AudioClip& clip, Scalar f0_min = 60, Scalar f0_max = 400);

// Fixed, untrained embedding: per-bin mel mean and std plus log-F0 mean and
// std, randomly projected to 32 dims and L2-normalized.
SpeakerEmbedding speaker_embedding(const audio::AudioClip& clip);

Scalar cosine(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

struct ConversionPair {
  const audio::AudioClip* source = nullptr;
  const audio::AudioClip* reference = nullptr;
};

// Returns the converted mel for (source, reference).
using Converter = std::function<audio::MelSpectrogram(const audio::AudioClip& source,
                                                      const audio::AudioClip& reference)>;

struct DisentanglementResult {
  Scalar win_rate = 0;
  Scalar mean_similarity_reference = 0;
  Scalar mean_similarity_source = 0;
};

// Fraction of pairs where the converted speech is closer to the reference
// speaker than to the source speaker. Source, reference and converted speech
// all go through the same Griffin-Lim path before embedding.
DisentanglementResult disentanglement_score(const std::vector<ConversionPair>& pairs,
                                            const Converter& convert);

// Distinct-speaker pairs drawn deterministically from `corpus`.
std::vector<ConversionPair> cross_speaker_pairs(const Corpus& corpus, int count, uint64_t seed);

struct RtfResult {
  Scalar rtf = 0;  // median seconds per second of audio
  Scalar cv = 0;   // coefficient of variation of the timed runs
  bool noisy = false;
  std::vector<Scalar> runs;
};

// Times encode + fuse + N-step sampling (Griffin-Lim excluded) with
// source = reference = clip: one warm-up, then the median of `runs`.
RtfResult measure_rtf(const Model& model, const audio::AudioClip& clip, int steps, int runs = 5);
// Same, with Griffin-Lim included.
RtfResult measure_pipeline_rtf(const Model& model, const audio::AudioClip& clip, int steps,
                               int runs = 5);

struct AdapterReport {
  Tensor content;  // per-layer weights
  Tensor speaker;
  bool fixed = false;  // adapters disabled, one-hot weights
};

AdapterReport adapter_report(const Model& model);
std::string adapter_csv(const AdapterReport& report);
std::string adapter_ascii(const AdapterReport& report);
std::string adapter_svg(const AdapterReport& report);
// Writes adapter_weights.csv, adapter_weights.svg and adapter_weights.txt.
void write_adapter_report(const AdapterReport& report, const std::filesystem::path& dir);

struct EvalReport {
  std::vector<std::pair<int, RtfResult>> rtf;           // decoder path, by step count
  std::vector<std::pair<int, RtfResult>> pipeline_rtf;  // including Griffin-Lim
  Scalar reconstruction_mse = 0;  // source = reference
  DisentanglementResult disentanglement;
  AdapterReport adapters;

  std::string to_json() const;
};

}  // namespace adaptvc
