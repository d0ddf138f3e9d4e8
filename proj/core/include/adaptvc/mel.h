#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "adaptvc/audio.h"
#include "adaptvc/tensor.h"

namespace adaptvc::audio {

struct MelConfig {
  int window_size = 1280;
  int fft_size = 1280;
  int hop = 320;
  int n_mels = 80;
  int sample_rate = 16000;
  Scalar f_min = 0;
  Scalar f_max = 8000;
  // Floor applied to mel power before the logarithm.
  Scalar log_floor = 1e-5;

  void validate() const;
};

// Log-mel frames, [T x n_mels].
struct MelSpectrogram {
  Tensor frames;

  int64_t num_frames() const { return frames.rows(); }
  int64_t num_bins() const { return frames.cols(); }
};

// HTK mel scale, 2595 * log10(1 + f / 700).
Scalar hz_to_mel(Scalar hz);
Scalar mel_to_hz(Scalar mel);

// Triangular filters with unit peak, [n_mels x (fft_size/2 + 1)].
Tensor mel_filterbank(const MelConfig& config);
std::vector<Scalar> mel_center_frequencies(const MelConfig& config);

// Frame count for centered analysis: floor(num_samples / hop).
int64_t frame_count(int64_t num_samples, const MelConfig& config);

struct Spectrogram {
  int64_t frames = 0;
  int64_t bins = 0;
  std::vector<std::complex<Scalar>> values;  // row-major [frames x bins]

  std::complex<Scalar>& at(int64_t t, int64_t k) { return values[static_cast<size_t>(t * bins + k)]; }
  std::complex<Scalar> at(int64_t t, int64_t k) const {
    return values[static_cast<size_t>(t * bins + k)];
  }
};

// Periodic Hann analysis with window_size/2 reflect padding on both ends.
Spectrogram stft(const std::vector<Scalar>& samples, const MelConfig& config);
// Weighted overlap-add inverse of stft(); returns frames * hop samples.
std::vector<Scalar> istft(const Spectrogram& spec, const MelConfig& config);

MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelConfig& config = {});

struct GriffinLimOptions {
  int iterations = 32;
  // Multiplicative-update steps for the nonnegative power estimate.
  int nnls_iterations = 100;
  uint64_t seed = 0;
  // When set, receives the mel MSE of the running reconstruction after each
  // iteration (entry 0 is the random-phase starting point).
  std::vector<Scalar>* mel_mse_trace = nullptr;
};

// Vocoder substitute: nonnegative least-squares inversion of the mel
// filterbank to get linear magnitudes, then Griffin-Lim phase retrieval.
AudioClip griffin_lim(const MelSpectrogram& mel, const MelConfig& config = {},
                      const GriffinLimOptions& options = {});

Scalar mel_mse(const MelSpectrogram& a, const MelSpectrogram& b);

}  // namespace adaptvc::audio
