#pragma once

#include <cstdint>

namespace mixfit {

/// SplitMix64 finalizer: a bijective 64-bit avalanche.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

// Counter-based random stream: draw c is mix64(key + c * golden). The full state
// is the (key, counter) pair, so a stream is reproducible on any platform and can
// be copied or fast-forwarded freely.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : key_(mix64(seed ^ 0x6A09E667F3BCC909ULL)) {}

  std::uint64_t next_u64() { return mix64(key_ + (counter_++) * 0x9E3779B97F4A7C15ULL); }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per pair of uniforms).
  double normal();

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mixfit
