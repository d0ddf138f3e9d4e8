#pragma once

#include <complex>
#include <span>
#include <vector>

#include "adaptvc/tensor.h"

namespace adaptvc::audio::detail {

// Real FFT of fixed size backed by FFTW. Instances own their buffers and
// are not shared between threads; use thread_fft() for a per-thread cache.
class RealFft {
 public:
  explicit RealFft(int size);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return size_; }
  int bins() const { return size_ / 2 + 1; }

  void forward(std::span<const Scalar> in, std::span<std::complex<Scalar>> out);
  // Unnormalized inverse: forward followed by inverse scales by size().
  void inverse(std::span<const std::complex<Scalar>> in, std::span<Scalar> out);

 private:
  int size_;
  double* real_;
  void* complex_;
  void* forward_plan_;
  void* inverse_plan_;
};

RealFft& thread_fft(int size);

}  // namespace adaptvc::audio::detail
