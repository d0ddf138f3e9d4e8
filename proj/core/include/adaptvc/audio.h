#pragma once

#include <filesystem>
#include <vector>

#include "adaptvc/tensor.h"

namespace adaptvc::audio {

struct AudioClip {
  std::vector<Scalar> samples;
  int sample_rate = 16000;

  double duration() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

// Reads RIFF/WAVE with 16-bit PCM or 32-bit IEEE float samples, mono or
// stereo. Channels are averaged to mono. Throws DataError with the offending
// chunk or format field on malformed input.
AudioClip load_wav(const std::filesystem::path& path);
AudioClip decode_wav(const std::vector<unsigned char>& bytes);

// 16-bit little-endian PCM mono. Samples are clipped to [-1, 1].
void save_wav(const std::filesystem::path& path, const AudioClip& clip);
std::vector<unsigned char> encode_wav(const AudioClip& clip);

struct ResampleOptions {
  // Zero crossings of the windowed sinc on each side of the output point.
  int half_taps = 16;
  // Passband edge as a fraction of the lower Nyquist frequency.
  double rolloff = 0.95;
};

AudioClip resample(const AudioClip& clip, int target_rate = 16000,
                   const ResampleOptions& options = {});

Scalar rms(const AudioClip& clip);
// Scales to the given RMS; silent clips are returned unchanged.
AudioClip normalize_rms(const AudioClip& clip, Scalar target_rms);

}  // namespace adaptvc::audio
