#pragma once

#include <cmath>
#include <cstdint>

namespace csr {

/// SplitMix64 finalizer (Steele, Lea & Flood); a bijective 64-bit mix.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256** (Blackman & Vigna) with counter-based stream splitting.
///
/// Stream `k` of master seed `s` is seeded by running SplitMix64 from
/// mix(s) ^ mix(k + golden), so every trial owns an independent, reproducible
/// stream no matter which thread or in which order it runs.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed) { reseed(seed); }
  Xoshiro256(std::uint64_t master_seed, std::uint64_t stream)
      : Xoshiro256(splitmix64_mix(master_seed) ^ splitmix64_mix(stream + kGolden)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on (0, 1], 53-bit resolution.
  double uniform_open_zero() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53 + 0x1.0p-53; }

  /// Exp(1) by inversion. std::exponential_distribution is not specified
  /// bit-for-bit across standard libraries.
  double standard_exponential() { return -std::log(uniform_open_zero()); }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  void reseed(std::uint64_t seed) {
    for (auto& word : s_) {
      seed += kGolden;
      word = splitmix64_mix(seed);
    }
  }

  std::uint64_t s_[4];
};

}  // namespace csr
