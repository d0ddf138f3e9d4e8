#include "adaptvc/rng.h"

#include <sstream>
#include <stdexcept>

namespace adaptvc {
namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t derive_seed(uint64_t root, std::string_view stream) {
  // FNV-1a over the stream name, mixed with the root.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(root ^ splitmix64(h));
}

uint64_t derive_seed(uint64_t root, std::string_view stream, uint64_t index) {
  return splitmix64(derive_seed(root, stream) + splitmix64(index + 1));
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi_inclusive) {
  if (hi_inclusive < lo) throw std::invalid_argument("uniform_int: empty range");
  std::uniform_int_distribution<int64_t> dist(lo, hi_inclusive);
  return dist(engine_);
}

Tensor Rng::normal_tensor(Shape shape, Scalar stddev) {
  Tensor t(std::move(shape));
  for (Scalar& v : t.values()) v = stddev * normal();
  return t;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << normal_;
  return os.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_ >> normal_;
  if (!is) throw std::invalid_argument("malformed RNG state");
}

}  // namespace adaptvc
