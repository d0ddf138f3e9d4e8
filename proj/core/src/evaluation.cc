#include "adaptvc/evaluation.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "adaptvc/error.h"
#include "adaptvc/rng.h"

namespace adaptvc {
namespace {

constexpr uint64_t kProjectionSeed = 0x5eed5eedULL;
constexpr Scalar kPitchWeight = 25.0;

const std::vector<Scalar>& projection(size_t inputs) {
  static const std::vector<Scalar> matrix = [inputs] {
    Rng rng(kProjectionSeed);
    std::vector<Scalar> m(inputs * kEmbeddingDim);
    for (Scalar& v : m) v = rng.normal() / std::sqrt(static_cast<Scalar>(kEmbeddingDim));
    return m;
  }();
  return matrix;
}

Scalar median(std::vector<Scalar> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename Fn>
RtfResult time_runs(const audio::AudioClip& clip, int runs, Fn&& fn) {
  if (clip.samples.empty()) throw std::invalid_argument("rtf: zero-length clip");
  if (runs < 1) throw std::invalid_argument("rtf: need at least one timed run");
  fn();
  RtfResult r;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    r.runs.push_back(std::chrono::duration<Scalar>(t1 - t0).count() / clip.duration());
  }
  r.rtf = median(r.runs);
  const Scalar mean = std::accumulate(r.runs.begin(), r.runs.end(), 0.0) / runs;
  Scalar var = 0;
  for (Scalar x : r.runs) var += (x - mean) * (x - mean) / runs;
  r.cv = mean > 0 ? std::sqrt(var) / mean : 0;
  r.noisy = r.cv >= 0.3;
  return r;
}

}  // namespace

std::vector<Scalar> track_f0(const audio::AudioClip& clip, Scalar f0_min, Scalar f0_max) {
  const int rate = clip.sample_rate;
  const int window = rate / 25, hop = rate / 100;
  const int lag_min = static_cast<int>(std::floor(rate / f0_max));
  const int lag_max = static_cast<int>(std::ceil(rate / f0_min));
  const auto n = static_cast<int64_t>(clip.samples.size());
  const Scalar clip_rms = audio::rms(clip);
  std::vector<Scalar> f0;
  for (int64_t start = 0; start + window + lag_max <= n; start += hop) {
    const Scalar* x = clip.samples.data() + start;
    Scalar energy = 0;
    for (int i = 0; i < window; ++i) energy += x[i] * x[i];
    if (energy <= 0 || std::sqrt(energy / window) < 0.1 * clip_rms) {
      f0.push_back(0);
      continue;
    }
    Scalar best = 0;
    int best_lag = 0;
    std::vector<Scalar> corr(static_cast<size_t>(lag_max + 2), 0.0);
    for (int lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
      Scalar c = 0, e2 = 0;
      for (int i = 0; i < window; ++i) {
        c += x[i] * x[i + lag];
        e2 += x[i + lag] * x[i + lag];
      }
      const Scalar r = e2 > 0 ? c / std::sqrt(energy * e2) : 0;
      corr[static_cast<size_t>(std::min(lag, lag_max + 1))] = r;
      if (lag >= lag_min && lag <= lag_max && r > best) {
        best = r;
        best_lag = lag;
      }
    }
    if (best < 0.5 || best_lag == 0) {
      f0.push_back(0);
      continue;
    }
    // Parabolic refinement around the peak.
    const Scalar a = corr[static_cast<size_t>(best_lag - 1)];
    const Scalar c = corr[static_cast<size_t>(best_lag + 1)];
    const Scalar denom = a - 2 * best + c;
    const Scalar offset = denom != 0 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;
    f0.push_back(rate / (best_lag + offset));
  }
  return f0;
}

SpeakerEmbedding speaker_embedding(const audio::AudioClip& clip) {
  if (clip.duration() < 0.5) {
    throw std::invalid_argument("speaker_embedding: clip of " + std::to_string(clip.duration()) +
                                " s is shorter than 0.5 s");
  }
  const audio::AudioClip norm = audio::normalize_rms(clip, 0.1);
  const audio::MelSpectrogram mel = audio::mel_spectrogram(norm);
  const int64_t bins = mel.num_bins(), frames = mel.num_frames();

  std::vector<Scalar> features(static_cast<size_t>(2 * bins + 2), 0.0);
  Scalar grand = 0;
  for (int64_t m = 0; m < bins; ++m) {
    Scalar mean = 0, sq = 0;
    for (int64_t t = 0; t < frames; ++t) mean += mel.frames.at(t, m) / frames;
    for (int64_t t = 0; t < frames; ++t) {
      const Scalar d = mel.frames.at(t, m) - mean;
      sq += d * d / frames;
    }
    features[static_cast<size_t>(m)] = mean;
    features[static_cast<size_t>(bins + m)] = std::sqrt(sq) - 1.0;
    grand += mean / bins;
  }
  for (int64_t m = 0; m < bins; ++m) features[static_cast<size_t>(m)] -= grand;

  SpeakerEmbedding out;
  std::vector<Scalar> logf0;
  for (Scalar f : track_f0(norm)) {
    if (f > 0) logf0.push_back(std::log(f));
  }
  if (logf0.empty()) {
    out.unvoiced = true;
  } else {
    const Scalar mean = std::accumulate(logf0.begin(), logf0.end(), 0.0) / logf0.size();
    Scalar var = 0;
    for (Scalar v : logf0) var += (v - mean) * (v - mean) / logf0.size();
    features[static_cast<size_t>(2 * bins)] = kPitchWeight * (mean - std::log(150.0));
    features[static_cast<size_t>(2 * bins + 1)] = kPitchWeight * std::sqrt(var);
  }

  const auto& proj = projection(features.size());
  Scalar norm2 = 0;
  for (int k = 0; k < kEmbeddingDim; ++k) {
    Scalar acc = 0;
    for (size_t i = 0; i < features.size(); ++i) {
      acc += proj[static_cast<size_t>(k) * features.size() + i] * features[i];
    }
    out.vector[static_cast<size_t>(k)] = acc;
    norm2 += acc * acc;
  }
  const Scalar inv = norm2 > 0 ? 1.0 / std::sqrt(norm2) : 0.0;
  for (Scalar& v : out.vector) v *= inv;
  return out;
}

Scalar cosine(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  Scalar dot = 0;
  for (int k = 0; k < kEmbeddingDim; ++k) dot += a.vector[static_cast<size_t>(k)] * b.vector[static_cast<size_t>(k)];
  return std::clamp<Scalar>(dot, -1.0, 1.0);
}

DisentanglementResult disentanglement_score(const std::vector<ConversionPair>& pairs,
                                            const Converter& convert) {
  if (pairs.empty()) throw std::invalid_argument("disentanglement_score: no pairs");
  auto vocode = [](const audio::MelSpectrogram& mel) {
    return speaker_embedding(audio::griffin_lim(mel));
  };
  DisentanglementResult r;
  int wins = 0;
  for (const ConversionPair& p : pairs) {
    const SpeakerEmbedding src = vocode(audio::mel_spectrogram(*p.source));
    const SpeakerEmbedding ref = vocode(audio::mel_spectrogram(*p.reference));
    const SpeakerEmbedding conv = vocode(convert(*p.source, *p.reference));
    const Scalar to_ref = cosine(conv, ref), to_src = cosine(conv, src);
    wins += to_ref > to_src;
    r.mean_similarity_reference += to_ref / pairs.size();
    r.mean_similarity_source += to_src / pairs.size();
  }
  r.win_rate = static_cast<Scalar>(wins) / pairs.size();
  return r;
}

std::vector<ConversionPair> cross_speaker_pairs(const Corpus& corpus, int count, uint64_t seed) {
  const auto& utts = corpus.utterances;
  std::vector<std::pair<size_t, size_t>> candidates;
  for (size_t i = 0; i < utts.size(); ++i) {
    for (size_t j = 0; j < utts.size(); ++j) {
      if (utts[i].speaker != utts[j].speaker && utts[i].script != utts[j].script) {
        candidates.emplace_back(i, j);
      }
    }
  }
  if (candidates.empty()) throw std::invalid_argument("corpus has no cross-speaker pairs");
  Rng rng(derive_seed(seed, "pairs"));
  std::shuffle(candidates.begin(), candidates.end(), rng.engine());
  std::vector<ConversionPair> pairs;
  for (int i = 0; i < count && i < static_cast<int>(candidates.size()); ++i) {
    pairs.push_back({&utts[candidates[static_cast<size_t>(i)].first].clip,
                     &utts[candidates[static_cast<size_t>(i)].second].clip});
  }
  return pairs;
}

RtfResult measure_rtf(const Model& model, const audio::AudioClip& clip, int steps, int runs) {
  return time_runs(clip, runs, [&] {
    Rng rng(derive_seed(model.config().seed, "sampling"));
    model.convert(clip, clip, steps, rng);
  });
}

RtfResult measure_pipeline_rtf(const Model& model, const audio::AudioClip& clip, int steps,
                               int runs) {
  return time_runs(clip, runs, [&] {
    Rng rng(derive_seed(model.config().seed, "sampling"));
    audio::griffin_lim(model.convert(clip, clip, steps, rng), model.config().mel);
  });
}

AdapterReport adapter_report(const Model& model) {
  AdapterReport r;
  r.content = model.content_encoder().layer_weights();
  r.speaker = model.speaker_encoder().layer_weights();
  r.fixed = !model.config().encoder.use_adapter;
  return r;
}

std::string adapter_csv(const AdapterReport& report) {
  std::ostringstream out;
  out << "adapter,layer,weight\n";
  char line[96];
  for (const auto& [name, w] : {std::pair{"content", &report.content}, {"speaker", &report.speaker}}) {
    for (int64_t l = 0; l < w->size(); ++l) {
      std::snprintf(line, sizeof line, "%s,%lld,%.8f\n", name, static_cast<long long>(l + 1),
                    (*w)[l]);
      out << line;
    }
  }
  return out.str();
}

std::string adapter_ascii(const AdapterReport& report) {
  std::ostringstream out;
  constexpr int kWidth = 50;
  for (const auto& [name, w] : {std::pair{"content", &report.content}, {"speaker", &report.speaker}}) {
    out << name << " adapter" << (report.fixed ? " (fixed)" : "") << '\n';
    Scalar peak = 0;
    for (int64_t l = 0; l < w->size(); ++l) peak = std::max(peak, (*w)[l]);
    for (int64_t l = 0; l < w->size(); ++l) {
      const int len = peak > 0 ? static_cast<int>(std::lround(kWidth * (*w)[l] / peak)) : 0;
      char label[48];
      std::snprintf(label, sizeof label, "  L%-3lld %.4f ", static_cast<long long>(l + 1), (*w)[l]);
      out << label << std::string(static_cast<size_t>(len), '#') << '\n';
    }
  }
  return out.str();
}

std::string adapter_svg(const AdapterReport& report) {
  const int64_t layers = report.content.size();
  const int bar = 24, gap = 8, height = 160, margin = 30;
  const int panel = static_cast<int>(layers) * (bar + gap) + margin * 2;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << panel * 2 << "\" height=\""
      << height + 2 * margin << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  int panel_index = 0;
  for (const auto& [name, w] : {std::pair{"content", &report.content}, {"speaker", &report.speaker}}) {
    const int x0 = panel_index++ * panel + margin;
    Scalar peak = 0;
    for (int64_t l = 0; l < w->size(); ++l) peak = std::max(peak, (*w)[l]);
    out << "  <text x=\"" << x0 << "\" y=\"16\">" << name << " adapter</text>\n";
    for (int64_t l = 0; l < w->size(); ++l) {
      const int h = peak > 0 ? static_cast<int>(std::lround(height * (*w)[l] / peak)) : 0;
      const int x = x0 + static_cast<int>(l) * (bar + gap);
      out << "  <rect x=\"" << x << "\" y=\"" << margin + height - h << "\" width=\"" << bar
          << "\" height=\"" << h << "\" fill=\"#4a7ab5\"/>\n";
      out << "  <text x=\"" << x + bar / 2 << "\" y=\"" << margin + height + 14
          << "\" text-anchor=\"middle\">" << l + 1 << "</text>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

void write_adapter_report(const AdapterReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
  const std::pair<const char*, std::string> files[] = {
      {"adapter_weights.csv", adapter_csv(report)},
      {"adapter_weights.txt", adapter_ascii(report)},
      {"adapter_weights.svg", adapter_svg(report)},
  };
  for (const auto& [name, text] : files) {
    std::ofstream out(dir / name);
    out << text;
    if (!out) throw DataError("failed writing " + (dir / name).string());
  }
}

std::string EvalReport::to_json() const {
  using nlohmann::json;
  auto rtf_json = [](const std::vector<std::pair<int, RtfResult>>& v) {
    json j = json::object();
    for (const auto& [steps, r] : v) {
      j[std::to_string(steps)] = {{"rtf", r.rtf}, {"cv", r.cv}, {"noisy", r.noisy}, {"runs", r.runs}};
    }
    return j;
  };
  auto weights = [](const Tensor& t) {
    return std::vector<Scalar>(t.values().begin(), t.values().end());
  };
  json j;
  j["rtf"] = rtf_json(rtf);
  j["pipeline_rtf"] = rtf_json(pipeline_rtf);
  j["reconstruction_mel_mse"] = reconstruction_mse;
  j["speaker_similarity"] = {{"converted_vs_reference", disentanglement.mean_similarity_reference},
                             {"converted_vs_source", disentanglement.mean_similarity_source}};
  j["disentanglement_win_rate"] = disentanglement.win_rate;
  j["adapter_weights"] = {{"content", weights(adapters.content)},
                          {"speaker", weights(adapters.speaker)},
                          {"fixed", adapters.fixed}};
  return j.dump(2);
}

}  // namespace adaptvc
