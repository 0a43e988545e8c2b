#pragma once

#include <cstdint>

namespace storage_market {

namespace detail {
/// 64-bit avalanche mix (splitmix64 finalizer).
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Derives an independent seed from a base seed and up to two lane indices,
/// so per-run and per-stream seeds never collide or correlate.
inline constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                           std::uint64_t b = 0) {
  std::uint64_t h = detail::mix64(base ^ 0x2545f4914f6cdd1dULL);
  h = detail::mix64(h ^ (a * 0xd6e8feb86659fd93ULL));
  h = detail::mix64(h ^ (b * 0xa0761d6478bd642fULL));
  return h;
}

/// Counter-based generator: the n-th draw is a pure function of (seed,
/// stream, n). Identical seeds reproduce identical draw sequences on every
/// platform, and independent streams never share state.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(derive_seed(seed, stream, 0x9d8a075e4f1c2b63ULL)) {}

  std::uint64_t next_u64() { return detail::mix64(key_ ^ (++counter_ * kStep)); }

  /// Uniform double in [lo, hi) with 53 bits of resolution.
  double uniform(double lo, double hi) {
    const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

 private:
  static constexpr std::uint64_t kStep = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace storage_market
