#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mapfuse {

// Deterministic RNG with self-contained distributions. std::* distributions
// are not pinned across standard libraries, so uniform/normal are implemented
// directly on top of the engine output.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed), seed_mix_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive integer range
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(eng_() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Box-Muller; one value per call, cached pair discarded for simplicity
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Derive an independent stream; mixing keeps sibling streams decorrelated.
  Rng fork(uint64_t salt) const {
    uint64_t x = seed_mix_ ^ (salt + 0x9e3779b97f4a7c15ull);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return Rng(x);
  }

  static Rng with_stream(uint64_t seed, uint64_t stream) { return Rng(seed).fork(stream); }

 private:
  std::mt19937_64 eng_;
  uint64_t seed_mix_ = 0;
};

}  // namespace mapfuse
