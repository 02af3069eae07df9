#pragma once

#include <cstdint>

namespace carfluents {

/// SplitMix64. Small, fast, and fully reproducible across platforms;
/// every randomized component derives its stream from an explicit seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [0, n), n > 0.
  int next_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) { return lo + next_int(hi - lo + 1); }

  /// Derive an independent stream for a sub-task; detaches determinism
  /// from scheduling order.
  Rng fork(std::uint64_t stream) const {
    Rng r(state_ ^ (0x632be59bd9b4e019ULL * (stream + 1)));
    r.next_u64();
    return r;
  }

 private:
  std::uint64_t state_;
};

}  // namespace carfluents
