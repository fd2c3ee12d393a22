#pragma once

#include <cmath>
#include <cstdint>

namespace textdet {

/// Deterministic splitmix64-based generator. Every stochastic component in the
/// pipeline draws from one of these so runs are bit-reproducible across
/// platforms; std::random distributions are implementation-defined and are
/// deliberately avoided.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); n must be positive.
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  /// Standard normal via Box-Muller (one value per call; pairs are not cached
  /// so the draw count stays predictable).
  double normal() {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Derive an independent generator for a named substream (per tile, per
  /// scene, per iteration) without advancing this one.
  Rng fork(uint64_t stream) const {
    Rng r(state_ ^ (0x632be59bd9b4e019ull * (stream + 1)));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
};

}  // namespace textdet
