#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace ionkerr {

/// SplitMix64 (Steele, Lea, Flood 2014). Used for seeding and for deriving
/// independent stream keys from (seed, counters).
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t state) : state_(state) {}

  constexpr std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// xoshiro256** 1.0 (Blackman, Vigna), state filled from SplitMix64.
///
/// Distribution helpers are defined here rather than taken from <random> so
/// that a given (seed, counters) pair yields the same variates on every
/// standard library and in ports to other languages:
///   uniform()      (x >> 11) * 2^-53, in [0, 1)
///   geometric(q)   floor(log(1 - U) / log(q)), P(n) = (1 - q) q^n
///   bernoulli(p)   U < p
///   exponential(r) -log(1 - U) / r
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Xoshiro256(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm.next();
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  constexpr result_type operator()() {
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

  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Number of failures before the first success with continuation ratio q in [0, 1).
  std::uint32_t geometric(double q) {
    if (q <= 0.0) return 0;
    const double n = std::floor(std::log1p(-uniform()) / std::log(q));
    return n > 4.0e9 ? 4000000000u : static_cast<std::uint32_t>(n);
  }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> s_{};
};

/// Stream for a given position in a simulation. Every counter is folded into
/// the key through SplitMix64, so streams for different (seed, counters) are
/// statistically independent and do not depend on execution order.
inline Xoshiro256 derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> counters) {
  std::uint64_t key = SplitMix64(seed).next();
  for (std::uint64_t c : counters) key = SplitMix64(key ^ SplitMix64(c + 0x632be59bd9b4e019ULL).next()).next();
  return Xoshiro256(key);
}

}  // namespace ionkerr
