#include "adaptvc/audio.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "adaptvc/error.h"

namespace adaptvc::audio {
namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

struct Format {
  uint16_t tag = 0;
  uint16_t channels = 0;
  uint32_t sample_rate = 0;
  uint16_t bits = 0;
};

}  // namespace

AudioClip decode_wav(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12) {
    throw DataError("truncated WAV: missing RIFF header (" + std::to_string(bytes.size()) +
                    " bytes)");
  }
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file");
  }
  Format fmt;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  size_t data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(reinterpret_cast<const char*>(bytes.data() + pos), 4);
    const uint32_t size = read_u32(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    const size_t available = bytes.size() - body;
    if (id == "fmt ") {
      if (size < 16 || available < 16) {
        throw DataError("truncated 'fmt ' chunk: expected 16 bytes, got " +
                        std::to_string(std::min<size_t>(size, available)));
      }
      const unsigned char* p = bytes.data() + body;
      fmt.tag = read_u16(p);
      fmt.channels = read_u16(p + 2);
      fmt.sample_rate = read_u32(p + 4);
      fmt.bits = read_u16(p + 14);
      if (fmt.tag == kFormatExtensible && size >= 26 && available >= 26) {
        fmt.tag = read_u16(p + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DataError("missing 'fmt ' chunk before 'data' chunk");
      if (size > available) {
        throw DataError("truncated 'data' chunk: expected " + std::to_string(size) +
                        " bytes, got " + std::to_string(available));
      }
      data = bytes.data() + body;
      data_size = size;
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw DataError("missing 'fmt ' chunk");
  if (!data) throw DataError("missing 'data' chunk");
  if (fmt.channels == 0 || fmt.channels > 2) {
    throw DataError("unsupported channel count " + std::to_string(fmt.channels));
  }
  if (fmt.sample_rate == 0) throw DataError("invalid sample rate 0 in 'fmt ' chunk");
  const bool pcm16 = fmt.tag == kFormatPcm && fmt.bits == 16;
  const bool float32 = fmt.tag == kFormatFloat && fmt.bits == 32;
  if (!pcm16 && !float32) {
    throw DataError("unsupported encoding: format tag " + std::to_string(fmt.tag) + ", " +
                    std::to_string(fmt.bits) + " bits per sample");
  }
  const size_t bytes_per_sample = fmt.bits / 8;
  const size_t frame_bytes = bytes_per_sample * fmt.channels;
  const size_t frames = data_size / frame_bytes;
  if (frames == 0) throw DataError("empty 'data' chunk");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(fmt.sample_rate);
  clip.samples.resize(frames);
  for (size_t f = 0; f < frames; ++f) {
    Scalar acc = 0;
    for (size_t c = 0; c < fmt.channels; ++c) {
      const unsigned char* p = data + f * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        acc += static_cast<int16_t>(read_u16(p)) / 32768.0;
      } else {
        float v;
        uint32_t raw = read_u32(p);
        std::memcpy(&v, &raw, sizeof v);
        acc += std::clamp<Scalar>(v, -1.0, 1.0);
      }
    }
    clip.samples[f] = acc / fmt.channels;
  }
  return clip;
}

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<unsigned char> encode_wav(const AudioClip& clip) {
  const uint32_t data_bytes = static_cast<uint32_t>(clip.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (Scalar s : clip.samples) {
    const Scalar c = std::clamp<Scalar>(s, -1.0, 1.0);
    const auto q = static_cast<int16_t>(std::clamp<long>(std::lround(c * 32768.0), -32768, 32767));
    put_u16(out, static_cast<uint16_t>(q));
  }
  return out;
}

void save_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write WAV file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing WAV file " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate, const ResampleOptions& options) {
  if (clip.sample_rate <= 0 || target_rate <= 0) {
    throw std::invalid_argument("resample: rates must be positive, got " +
                                std::to_string(clip.sample_rate) + " -> " +
                                std::to_string(target_rate));
  }
  if (clip.samples.empty()) throw std::invalid_argument("resample: empty clip");
  if (clip.sample_rate == target_rate) return clip;

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  // Cutoff in cycles per input sample, below the lower of the two Nyquists.
  const double cutoff = 0.5 * std::min(1.0, ratio) * options.rolloff;
  const double half_width = options.half_taps / (2.0 * cutoff);
  const auto in_len = static_cast<int64_t>(clip.samples.size());
  const auto out_len = std::max<int64_t>(1, std::llround(in_len * ratio));

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<size_t>(out_len));
  for (int64_t n = 0; n < out_len; ++n) {
    const double center = n / ratio;
    const auto lo = static_cast<int64_t>(std::ceil(center - half_width));
    const auto hi = static_cast<int64_t>(std::floor(center + half_width));
    double acc = 0, weight_sum = 0;
    for (int64_t k = std::max<int64_t>(lo, 0); k <= std::min(hi, in_len - 1); ++k) {
      const double x = k - center;
      const double arg = 2.0 * cutoff * x;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(std::numbers::pi * arg) /
                                                            (std::numbers::pi * arg);
      const double window = 0.5 + 0.5 * std::cos(std::numbers::pi * x / half_width);
      const double w = sinc * window;
      acc += w * clip.samples[static_cast<size_t>(k)];
      weight_sum += w;
    }
    out.samples[static_cast<size_t>(n)] = weight_sum != 0 ? acc / weight_sum : 0.0;
  }
  return out;
}

Scalar rms(const AudioClip& clip) {
  if (clip.samples.empty()) return 0;
  Scalar acc = 0;
  for (Scalar s : clip.samples) acc += s * s;
  return std::sqrt(acc / static_cast<Scalar>(clip.samples.size()));
}

AudioClip normalize_rms(const AudioClip& clip, Scalar target_rms) {
  const Scalar r = rms(clip);
  if (r <= 0) return clip;
  AudioClip out = clip;
  for (Scalar& s : out.samples) s *= target_rms / r;
  return out;
}

}  // namespace adaptvc::audio
