#pragma once

#include <cmath>
#include <cstdint>

#include "hypobridge/types.hpp"

namespace hypobridge {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Counter-based random stream: the state is derived from (seed, stream id),
/// so path i of an ensemble gets the same numbers no matter which worker
/// thread runs it or in which order.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t s = seed;
    (void)splitmix64(s);
    s ^= 0x8000000000000000ull + stream_id * 0xda942042e4dd58b5ull;
    s0_ = splitmix64(s);
    s1_ = splitmix64(s);
    if (s0_ == 0 && s1_ == 0) s1_ = 1;
  }

  std::uint64_t next_u64() {
    // xoroshiro128+
    std::uint64_t a = s0_, b = s1_;
    std::uint64_t r = a + b;
    b ^= a;
    s0_ = rotl(a, 24) ^ b ^ (b << 16);
    s1_ = rotl(b, 37);
    return r;
  }

  /// Uniform in (0,1).
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double c = std::cos(2.0 * kPi * u2);
    double s = std::sin(2.0 * kPi * u2);
    spare_ = r * s;
    has_spare_ = true;
    return r * c;
  }

  Vec next_normal_vec(int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = next_normal();
    return v;
  }

  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    return next_u64() % n;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s0_ = 0, s1_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hypobridge
