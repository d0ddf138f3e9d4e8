#include "adaptvc/corpus.h"

#include <array>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "adaptvc/error.h"
#include "adaptvc/rng.h"
#include "fft.h"

namespace adaptvc {
namespace {

constexpr int kRate = 16000;
constexpr Scalar kBandwidths[3] = {80, 100, 140};
constexpr Scalar kTransition = 0.04;

struct Resonator {
  Scalar y1 = 0, y2 = 0;
  Scalar step(Scalar x, Scalar freq, Scalar bw) {
    const Scalar r = std::exp(-std::numbers::pi * bw / kRate);
    const Scalar a1 = 2 * r * std::cos(2 * std::numbers::pi * freq / kRate);
    const Scalar a2 = -r * r;
    const Scalar y = (1 - r) * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

void apply_tilt(std::vector<Scalar>& x, Scalar db_per_octave) {
  const int n = static_cast<int>(x.size());
  auto& fft = audio::detail::thread_fft(n);
  std::vector<std::complex<Scalar>> spec(static_cast<size_t>(fft.bins()));
  fft.forward(x, spec);
  for (int k = 0; k < fft.bins(); ++k) {
    const Scalar f = std::max<Scalar>(100.0, static_cast<Scalar>(k) * kRate / n);
    spec[static_cast<size_t>(k)] *= std::pow(10.0, db_per_octave * std::log2(f / 100.0) / 20.0);
  }
  fft.inverse(spec, x);
  for (Scalar& s : x) s /= n;
}

}  // namespace

Scalar Script::duration() const {
  Scalar d = 0;
  for (const Segment& s : segments) d += s.duration;
  return d;
}

const std::vector<std::array<Scalar, 3>>& vowel_formants() {
  static const std::vector<std::array<Scalar, 3>> table = {
      {730, 1090, 2440}, {530, 1840, 2480}, {270, 2290, 3010}, {570, 840, 2410},
      {300, 870, 2240},  {660, 1720, 2410}, {490, 1350, 1690}, {520, 1190, 2390},
  };
  return table;
}

SynthSpeaker make_speaker(uint64_t seed, int index, int count) {
  Rng rng(derive_seed(seed, "speaker", static_cast<uint64_t>(index)));
  SynthSpeaker s;
  // Stratified pitch so that speakers in one corpus are spread out.
  const Scalar slot = (index % count + rng.uniform(0.15, 0.85)) / count;
  s.f0_base = 80 + 220 * slot;
  s.formant_shift = std::clamp<Scalar>(0.85 + 0.3 * slot + rng.uniform(-0.05, 0.05), 0.8, 1.25);
  s.spectral_tilt = rng.uniform(-10, -4);
  s.seed = derive_seed(seed, "speaker-voice", static_cast<uint64_t>(index));
  return s;
}

Script make_script(uint64_t seed, int index) {
  Rng rng(derive_seed(seed, "script", static_cast<uint64_t>(index)));
  Script script;
  const int count = static_cast<int>(rng.uniform_int(3, 6));
  const Scalar total = rng.uniform(0.8, 1.6);
  std::vector<Scalar> share(static_cast<size_t>(count));
  Scalar sum = 0;
  for (Scalar& w : share) sum += (w = rng.uniform(1.0, 2.0));
  const auto vowels = static_cast<int64_t>(vowel_formants().size());
  int previous = -1;
  for (int i = 0; i < count; ++i) {
    int v;
    do {
      v = static_cast<int>(rng.uniform_int(0, vowels - 1));
    } while (v == previous);
    previous = v;
    script.segments.push_back({v, total * share[static_cast<size_t>(i)] / sum});
  }
  return script;
}

audio::AudioClip render(const Script& script, const SynthSpeaker& speaker, uint64_t seed) {
  Rng rng(seed);
  const auto n = static_cast<int64_t>(std::floor(script.duration() * kRate));
  const Scalar rate = rng.uniform(1.0, 3.0), depth = rng.uniform(0.5, 1.0);
  const Scalar phase0 = rng.uniform(0, 2 * std::numbers::pi);

  // Segment boundaries in samples, for formant interpolation.
  std::vector<Scalar> ends;
  Scalar acc = 0;
  for (const Segment& s : script.segments) ends.push_back(acc += s.duration);
  const auto& table = vowel_formants();

  std::vector<Scalar> x(static_cast<size_t>(n));
  std::array<Resonator, 3> res;
  Scalar phase = 0;
  size_t seg = 0;
  for (int64_t i = 0; i < n; ++i) {
    const Scalar t = static_cast<Scalar>(i) / kRate;
    const Scalar f0 = speaker.f0_base *
                      (1 + 0.1 * depth * std::sin(2 * std::numbers::pi * rate * t + phase0));
    phase += f0 / kRate;
    Scalar source = 0;
    if (phase >= 1) {
      phase -= 1;
      source = 1;
    }
    source += 0.002 * rng.normal();

    while (seg + 1 < ends.size() && t >= ends[seg]) ++seg;
    std::array<Scalar, 3> formant = table[static_cast<size_t>(script.segments[seg].vowel)];
    if (seg + 1 < ends.size() && t > ends[seg] - kTransition / 2) {
      const auto& next = table[static_cast<size_t>(script.segments[seg + 1].vowel)];
      const Scalar w = (t - (ends[seg] - kTransition / 2)) / kTransition;
      for (int k = 0; k < 3; ++k) formant[k] += w * (next[k] - formant[k]) * 0.5;
    }
    if (seg > 0 && t < ends[seg - 1] + kTransition / 2) {
      const auto& prev = table[static_cast<size_t>(script.segments[seg - 1].vowel)];
      const Scalar w = ((ends[seg - 1] + kTransition / 2) - t) / kTransition;
      for (int k = 0; k < 3; ++k) formant[k] += w * (prev[k] - formant[k]) * 0.5;
    }
    Scalar y = source;
    for (int k = 0; k < 3; ++k) {
      y = res[static_cast<size_t>(k)].step(y, formant[k] * speaker.formant_shift, kBandwidths[k]);
    }
    x[static_cast<size_t>(i)] = y;
  }
  apply_tilt(x, speaker.spectral_tilt);

  const int64_t fade = kRate / 50;
  for (int64_t i = 0; i < std::min(fade, n); ++i) {
    const Scalar g = 0.5 - 0.5 * std::cos(std::numbers::pi * i / fade);
    x[static_cast<size_t>(i)] *= g;
    x[static_cast<size_t>(n - 1 - i)] *= g;
  }
  Scalar peak = 0;
  for (Scalar s : x) peak = std::max(peak, std::abs(s));
  if (peak > 0) {
    for (Scalar& s : x) s *= 0.5 / peak;
  }
  return {std::move(x), kRate};
}

Corpus make_corpus(int num_speakers, int utts_per_speaker, uint64_t seed) {
  if (num_speakers < 1 || utts_per_speaker < 1) {
    throw UsageError("corpus needs at least one speaker and one utterance per speaker");
  }
  Corpus c;
  for (int s = 0; s < num_speakers; ++s) c.speakers.push_back(make_speaker(seed, s, num_speakers));
  for (int u = 0; u < utts_per_speaker; ++u) c.scripts.push_back(make_script(seed, u));
  for (int s = 0; s < num_speakers; ++s) {
    for (int u = 0; u < utts_per_speaker; ++u) {
      Utterance utt;
      utt.id = "spk" + std::to_string(s) + "_utt" + std::to_string(u);
      utt.speaker = s;
      utt.script = u;
      utt.clip = render(c.scripts[static_cast<size_t>(u)], c.speakers[static_cast<size_t>(s)],
                        derive_seed(c.speakers[static_cast<size_t>(s)].seed, "utterance",
                                    static_cast<uint64_t>(u)));
      c.utterances.push_back(std::move(utt));
    }
  }
  return c;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw DataError("cannot write " + (dir / "manifest.csv").string());
  manifest << "path,speaker_id,script_id,duration\n";
  for (const Utterance& u : corpus.utterances) {
    const std::string name = u.id + ".wav";
    audio::save_wav(dir / name, u.clip);
    char duration[32];
    std::snprintf(duration, sizeof duration, "%.4f", u.clip.duration());
    manifest << name << ',' << u.speaker << ',' << u.script << ',' << duration << '\n';
  }
  if (!manifest) throw DataError("failed writing manifest in " + dir.string());
}

Corpus load_corpus(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.csv";
  std::ifstream in(path);
  if (!in) throw DataError("missing manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("path,speaker_id,script_id", 0) != 0) {
    throw DataError("manifest " + path.string() + " has an unexpected header");
  }
  Corpus c;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string file, spk, script;
    if (!std::getline(ss, file, ',') || !std::getline(ss, spk, ',') ||
        !std::getline(ss, script, ',')) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    Utterance u;
    u.id = std::filesystem::path(file).stem().string();
    try {
      u.speaker = std::stoi(spk);
      u.script = std::stoi(script);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad speaker/script id");
    }
    u.clip = audio::load_wav(dir / file);
    if (u.clip.sample_rate != kRate) u.clip = audio::resample(u.clip, kRate);
    c.utterances.push_back(std::move(u));
  }
  if (c.utterances.empty()) throw DataError("manifest " + path.string() + " lists no files");
  return c;
}

}  // namespace adaptvc
