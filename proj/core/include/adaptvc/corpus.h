#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adaptvc/audio.h"

namespace adaptvc {

struct SynthSpeaker {
  Scalar f0_base = 120;        // Hz, [80, 300]
  Scalar formant_shift = 1.0;  // [0.8, 1.25]
  Scalar spectral_tilt = -6;   // dB per octave
  uint64_t seed = 0;
};

struct Segment {
  int vowel = 0;
  Scalar duration = 0.2;  // seconds
};

// A content script: a sequence of vowel-like segments.
struct Script {
  std::vector<Segment> segments;
  Scalar duration() const;
};

struct Utterance {
  std::string id;
  int speaker = 0;
  int script = 0;
  audio::AudioClip clip;
};

struct Corpus {
  std::vector<SynthSpeaker> speakers;
  std::vector<Script> scripts;
  std::vector<Utterance> utterances;
};

// Formant targets (F1, F2, F3) in Hz of the built-in vowel inventory.
const std::vector<std::array<Scalar, 3>>& vowel_formants();

SynthSpeaker make_speaker(uint64_t seed, int index, int count);
Script make_script(uint64_t seed, int index);

// Source-filter rendering of `script` by `speaker`; `seed` drives the pitch
// contour and aspiration noise.
audio::AudioClip render(const Script& script, const SynthSpeaker& speaker, uint64_t seed);

// Every speaker renders the same `utts_per_speaker` scripts.
Corpus make_corpus(int num_speakers, int utts_per_speaker, uint64_t seed);

// WAV files plus manifest.csv (path, speaker_id, script_id, duration).
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
// Reads manifest.csv and the referenced WAV files; speaker and script
// descriptions are not restored.
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace adaptvc
