#include "adaptvc/mel.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "adaptvc/error.h"
#include "adaptvc/rng.h"
#include "fft.h"

namespace adaptvc::audio {
namespace {

std::vector<Scalar> hann_window(int size) {
  std::vector<Scalar> w(static_cast<size_t>(size));
  for (int n = 0; n < size; ++n) {
    w[static_cast<size_t>(n)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / size);
  }
  return w;
}

int64_t reflect_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Tensor power_to_mel(const Spectrogram& spec, const Tensor& filterbank, Scalar floor) {
  const int64_t n_mels = filterbank.rows();
  Tensor mel({spec.frames, n_mels});
  std::vector<Scalar> power(static_cast<size_t>(spec.bins));
  for (int64_t t = 0; t < spec.frames; ++t) {
    for (int64_t k = 0; k < spec.bins; ++k) power[static_cast<size_t>(k)] = std::norm(spec.at(t, k));
    for (int64_t m = 0; m < n_mels; ++m) {
      auto f = filterbank.row(m);
      Scalar acc = 0;
      for (int64_t k = 0; k < spec.bins; ++k) acc += f[k] * power[static_cast<size_t>(k)];
      mel.at(t, m) = std::log(std::max(acc, floor));
    }
  }
  return mel;
}

}  // namespace

void MelConfig::validate() const {
  if (window_size <= 0 || fft_size < window_size || hop <= 0 || n_mels <= 0 ||
      sample_rate <= 0) {
    throw std::invalid_argument("invalid mel configuration");
  }
  if (hop > window_size) throw std::invalid_argument("hop must not exceed window_size");
  if (n_mels >= fft_size / 2 + 1) {
    throw std::invalid_argument("n_mels must be below the FFT bin count");
  }
  if (!(log_floor > 0)) throw std::invalid_argument("log floor must be positive");
  if (!(f_min >= 0 && f_max > f_min && f_max <= sample_rate / 2.0)) {
    throw std::invalid_argument("mel frequency range must lie in [0, Nyquist]");
  }
}

Scalar hz_to_mel(Scalar hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
Scalar mel_to_hz(Scalar mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<Scalar> mel_edges(const MelConfig& config) {
  const Scalar lo = hz_to_mel(config.f_min), hi = hz_to_mel(config.f_max);
  std::vector<Scalar> edges(static_cast<size_t>(config.n_mels + 2));
  for (size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<Scalar>(i) / (config.n_mels + 1));
  }
  return edges;
}

}  // namespace

std::vector<Scalar> mel_center_frequencies(const MelConfig& config) {
  auto edges = mel_edges(config);
  return std::vector<Scalar>(edges.begin() + 1, edges.end() - 1);
}

Tensor mel_filterbank(const MelConfig& config) {
  config.validate();
  const int bins = config.fft_size / 2 + 1;
  const auto edges = mel_edges(config);
  Tensor fb({config.n_mels, bins});
  for (int m = 0; m < config.n_mels; ++m) {
    const Scalar left = edges[static_cast<size_t>(m)];
    const Scalar center = edges[static_cast<size_t>(m) + 1];
    const Scalar right = edges[static_cast<size_t>(m) + 2];
    for (int k = 0; k < bins; ++k) {
      const Scalar f = static_cast<Scalar>(k) * config.sample_rate / config.fft_size;
      const Scalar rise = (f - left) / (center - left);
      const Scalar fall = (right - f) / (right - center);
      fb.at(m, k) = std::max<Scalar>(0.0, std::min(rise, fall));
    }
  }
  return fb;
}

int64_t frame_count(int64_t num_samples, const MelConfig& config) {
  return num_samples / config.hop;
}

Spectrogram stft(const std::vector<Scalar>& samples, const MelConfig& config) {
  config.validate();
  const auto n = static_cast<int64_t>(samples.size());
  const int64_t frames = frame_count(n, config);
  if (frames < 1) {
    throw std::invalid_argument("clip of " + std::to_string(n) +
                                " samples is shorter than one hop (" +
                                std::to_string(config.hop) + ")");
  }
  const int64_t pad = config.window_size / 2;
  const int64_t offset = (config.fft_size - config.window_size) / 2;
  const auto window = hann_window(config.window_size);
  auto& fft = detail::thread_fft(config.fft_size);

  Spectrogram spec;
  spec.frames = frames;
  spec.bins = fft.bins();
  spec.values.resize(static_cast<size_t>(frames * spec.bins));
  std::vector<Scalar> buffer(static_cast<size_t>(config.fft_size));
  for (int64_t t = 0; t < frames; ++t) {
    std::fill(buffer.begin(), buffer.end(), 0.0);
    for (int64_t i = 0; i < config.window_size; ++i) {
      const int64_t src = reflect_index(t * config.hop + i - pad, n);
      buffer[static_cast<size_t>(offset + i)] =
          samples[static_cast<size_t>(src)] * window[static_cast<size_t>(i)];
    }
    fft.forward(buffer, std::span(spec.values).subspan(static_cast<size_t>(t * spec.bins),
                                                       static_cast<size_t>(spec.bins)));
  }
  return spec;
}

std::vector<Scalar> istft(const Spectrogram& spec, const MelConfig& config) {
  config.validate();
  auto& fft = detail::thread_fft(config.fft_size);
  if (spec.bins != fft.bins()) throw std::invalid_argument("istft: bin count mismatch");
  const int64_t pad = config.window_size / 2;
  const int64_t offset = (config.fft_size - config.window_size) / 2;
  const auto window = hann_window(config.window_size);
  const int64_t padded_len = (spec.frames - 1) * config.hop + config.window_size;
  std::vector<Scalar> acc(static_cast<size_t>(padded_len), 0.0);
  std::vector<Scalar> norm(static_cast<size_t>(padded_len), 0.0);
  std::vector<Scalar> frame(static_cast<size_t>(config.fft_size));
  const Scalar inv_n = 1.0 / config.fft_size;
  for (int64_t t = 0; t < spec.frames; ++t) {
    fft.inverse(std::span(spec.values).subspan(static_cast<size_t>(t * spec.bins),
                                               static_cast<size_t>(spec.bins)),
                frame);
    for (int64_t i = 0; i < config.window_size; ++i) {
      const Scalar w = window[static_cast<size_t>(i)];
      const size_t pos = static_cast<size_t>(t * config.hop + i);
      acc[pos] += frame[static_cast<size_t>(offset + i)] * inv_n * w;
      norm[pos] += w * w;
    }
  }
  std::vector<Scalar> out(static_cast<size_t>(spec.frames * config.hop));
  for (size_t i = 0; i < out.size(); ++i) {
    const size_t pos = i + static_cast<size_t>(pad);
    out[i] = norm[pos] > 1e-8 ? acc[pos] / norm[pos] : 0.0;
  }
  return out;
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelConfig& config) {
  if (clip.sample_rate != config.sample_rate) {
    throw std::invalid_argument("clip sample rate " + std::to_string(clip.sample_rate) +
                                " does not match mel configuration " +
                                std::to_string(config.sample_rate));
  }
  const Spectrogram spec = stft(clip.samples, config);
  return {power_to_mel(spec, mel_filterbank(config), config.log_floor)};
}

Scalar mel_mse(const MelSpectrogram& a, const MelSpectrogram& b) {
  if (a.frames.shape() != b.frames.shape()) {
    throw std::invalid_argument("mel_mse: shape mismatch " + shape_string(a.frames.shape()) +
                                " vs " + shape_string(b.frames.shape()));
  }
  Scalar acc = 0;
  for (int64_t i = 0; i < a.frames.size(); ++i) {
    const Scalar d = a.frames[i] - b.frames[i];
    acc += d * d;
  }
  return acc / static_cast<Scalar>(a.frames.size());
}

AudioClip griffin_lim(const MelSpectrogram& mel, const MelConfig& config,
                      const GriffinLimOptions& options) {
  config.validate();
  if (!mel.frames.all_finite()) throw std::invalid_argument("griffin_lim: non-finite mel");
  if (mel.num_bins() != config.n_mels) {
    throw std::invalid_argument("griffin_lim: mel has " + std::to_string(mel.num_bins()) +
                                " bins, configuration expects " + std::to_string(config.n_mels));
  }
  if (options.iterations < 0) throw std::invalid_argument("griffin_lim: negative iterations");

  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Tensor fb_tensor = mel_filterbank(config);
  const Eigen::Map<const RowMatrix> fb(fb_tensor.data(), fb_tensor.rows(), fb_tensor.cols());
  const int64_t frames = mel.num_frames();
  const int64_t bins = fb.cols();

  // Mel power with the log floor removed, so a floor-only frame maps to
  // silence. Columns are frames.
  RowMatrix target(config.n_mels, frames);
  for (int64_t t = 0; t < frames; ++t) {
    for (int m = 0; m < config.n_mels; ++m) {
      target(m, t) = std::max<Scalar>(0.0, std::exp(mel.frames.at(t, m)) - config.log_floor);
    }
  }
  // Nonnegative least squares for the linear power spectrum by multiplicative
  // updates, started from the column-normalized filterbank transpose.
  const RowMatrix projected = fb.transpose() * target;
  const Eigen::VectorXd coverage = fb.colwise().sum().transpose();
  RowMatrix power = projected;
  for (int64_t k = 0; k < bins; ++k) power.row(k) /= std::max<Scalar>(coverage[k], 1e-3);
  for (int it = 0; it < options.nnls_iterations; ++it) {
    const RowMatrix denom = fb.transpose() * (fb * power);
    power = power.cwiseProduct(projected).cwiseQuotient(denom.cwiseMax(1e-30));
  }
  std::vector<Scalar> magnitude(static_cast<size_t>(frames * bins));
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t k = 0; k < bins; ++k) {
      magnitude[static_cast<size_t>(t * bins + k)] = std::sqrt(std::max<Scalar>(0.0, power(k, t)));
    }
  }

  Rng rng(options.seed);
  Spectrogram spec;
  spec.frames = frames;
  spec.bins = bins;
  spec.values.resize(magnitude.size());
  for (size_t i = 0; i < magnitude.size(); ++i) {
    spec.values[i] = std::polar(magnitude[i], 2.0 * std::numbers::pi * rng.uniform());
  }

  auto record = [&](const std::vector<Scalar>& signal) {
    if (!options.mel_mse_trace) return;
    AudioClip c{signal, config.sample_rate};
    options.mel_mse_trace->push_back(mel_mse(mel_spectrogram(c, config), mel));
  };

  std::vector<Scalar> signal = istft(spec, config);
  record(signal);
  for (int it = 0; it < options.iterations; ++it) {
    const Spectrogram rebuilt = stft(signal, config);
    for (size_t i = 0; i < spec.values.size(); ++i) {
      const Scalar a = std::abs(rebuilt.values[i]);
      const std::complex<Scalar> phase =
          a > 1e-12 ? rebuilt.values[i] / a : std::complex<Scalar>(1.0, 0.0);
      spec.values[i] = magnitude[i] * phase;
    }
    signal = istft(spec, config);
    record(signal);
  }
  for (Scalar& s : signal) s = std::clamp<Scalar>(s, -1.0, 1.0);
  return AudioClip{std::move(signal), config.sample_rate};
}

}  // namespace adaptvc::audio
