#pragma once

// Keyed, counter-style random streams.
//
// Every random quantity in the library is drawn from a Stream whose state is
// a pure function of (master seed, domain, index): the domain separates
// independent uses (environment sites, walks, branching streams, ...) and the
// index is the site number, replica id or stream id. Keys are derived with the
// SplitMix64 finalizer and the stream itself is xoshiro256** 1.0. All
// distribution samplers below are written out here rather than taken from
// <random>, whose distributions are not specified bit-for-bit.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace rwre::rng {

enum class Domain : std::uint64_t {
  Site = 0x5173,
  Walk = 0x3a1c,
  Branch = 0xb7a9,
  Replica = 0x7e11,
  Bootstrap = 0xb005,
  Synthetic = 0x5e7d,
  Moment = 0x40e7,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_key(std::uint64_t seed, Domain domain, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(domain))) ^ index);
}

class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t key) {
    std::uint64_t x = key;
    for (auto& s : state_) {
      x = splitmix64(x);
      s = x;
    }
  }

  Stream(std::uint64_t seed, Domain domain, std::uint64_t index)
      : Stream(derive_key(seed, domain, index)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next(); }

  result_type next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  std::uint64_t below(std::uint64_t bound) {
    // Lemire's multiply-shift with rejection.
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double normal();
  double exponential() { return -std::log(uniform_open()); }
  double gamma(double shape);  // unit scale
  std::int64_t poisson(double mean);

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rwre::rng
