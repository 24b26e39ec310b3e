#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace neurocal {

/// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a stream key from a master seed and an ordered list of counters.
/// Streams keyed by distinct tuples are statistically independent, which is
/// what makes results independent of iteration order and thread count.
template <class... Parts>
constexpr std::uint64_t stream_key(std::uint64_t seed, Parts... parts) noexcept {
  std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  std::uint64_t salt = 0;
  ((h = mix64(h ^ mix64(static_cast<std::uint64_t>(parts) + (++salt) * 0x9e3779b97f4a7c15ULL))), ...);
  return h;
}

/// Counter-based random stream (SplitMix64). Satisfies
/// UniformRandomBitGenerator so it plugs into <random> distributions.
class Stream {
public:
  using result_type = std::uint64_t;

  constexpr explicit Stream(std::uint64_t key = 0) noexcept : state_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  /// Uniform variate in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal variate (Box-Muller, one value per call).
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift; the bias is < n / 2^64.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

  /// Fresh 64-bit seed for a child computation.
  std::uint64_t seed() noexcept { return (*this)(); }

private:
  std::uint64_t state_;
};

} // namespace neurocal
