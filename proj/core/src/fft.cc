#include "fft.h"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace adaptvc::audio::detail {
namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

RealFft::RealFft(int size) : size_(size) {
  if (size <= 0) throw std::invalid_argument("FFT size must be positive");
  std::lock_guard<std::mutex> lock(planner_mutex());
  real_ = fftw_alloc_real(static_cast<size_t>(size));
  auto* spectrum = fftw_alloc_complex(static_cast<size_t>(bins()));
  complex_ = spectrum;
  forward_plan_ = fftw_plan_dft_r2c_1d(size, real_, spectrum, FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r_1d(size, spectrum, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
  fftw_free(real_);
  fftw_free(complex_);
}

void RealFft::forward(std::span<const Scalar> in, std::span<std::complex<Scalar>> out) {
  std::copy(in.begin(), in.begin() + size_, real_);
  fftw_execute(static_cast<fftw_plan>(forward_plan_));
  auto* spectrum = static_cast<fftw_complex*>(complex_);
  for (int k = 0; k < bins(); ++k) out[static_cast<size_t>(k)] = {spectrum[k][0], spectrum[k][1]};
}

void RealFft::inverse(std::span<const std::complex<Scalar>> in, std::span<Scalar> out) {
  auto* spectrum = static_cast<fftw_complex*>(complex_);
  for (int k = 0; k < bins(); ++k) {
    spectrum[k][0] = in[static_cast<size_t>(k)].real();
    spectrum[k][1] = in[static_cast<size_t>(k)].imag();
  }
  // c2r overwrites its input, which is our private buffer.
  fftw_execute(static_cast<fftw_plan>(inverse_plan_));
  std::copy(real_, real_ + size_, out.begin());
}

RealFft& thread_fft(int size) {
  thread_local std::map<int, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[size];
  if (!slot) slot = std::make_unique<RealFft>(size);
  return *slot;
}

}  // namespace adaptvc::audio::detail
