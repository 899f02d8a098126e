#pragma once

#include <cmath>
#include <cstdint>

namespace coswin {

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so datasets and weight init are reproducible
// regardless of evaluation order. The mix is SplitMix64 applied to the
// combined key.
class Rng {
 public:
  Rng(uint64_t seed, uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  static uint64_t mix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  uint64_t next_u64() {
    uint64_t k = mix(seed_ ^ mix(stream_ ^ 0xA3C59AC2B67E1DB1ull));
    return mix(k + counter_++);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
    return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Box-Muller, one value per call (the partner draw is discarded).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    return mean + stddev * z;
  }

 private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t counter_ = 0;
};

}  // namespace coswin
