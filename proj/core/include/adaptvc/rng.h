#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "adaptvc/tensor.h"

namespace adaptvc {

// Derives an independent stream seed from a root seed and a stream name
// ("corpus", "init", "training", "sampling", ...).
uint64_t derive_seed(uint64_t root, std::string_view stream);
uint64_t derive_seed(uint64_t root, std::string_view stream, uint64_t index);

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  Scalar uniform() { return uniform_(engine_); }
  Scalar uniform(Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform(); }
  Scalar normal() { return normal_(engine_); }
  int64_t uniform_int(int64_t lo, int64_t hi_inclusive);

  Tensor normal_tensor(Shape shape, Scalar stddev = 1.0);

  std::string state() const;
  void set_state(const std::string& state);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<Scalar> uniform_{0.0, 1.0};
  std::normal_distribution<Scalar> normal_{0.0, 1.0};
};

}  // namespace adaptvc
