#pragma once

#include <cstdint>

namespace polyfwd::rng {

// splitmix64 mixing step; used to derive and expand seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Seed for an independent stream. Streams derived from the same base seed and
// distinct stream indices are statistically independent for Monte Carlo
// purposes, and results depend only on (seed, stream), never on scheduling.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (0xD1B54A32D192ED03ULL * (stream + 1));
  return splitmix64(s);
}

// xoshiro256++ by Blackman and Vigna (public domain reference algorithm).
class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0,1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(operator()() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// Standard-normal sampler using a 128-layer ziggurat (Doornik's wedge test).
// Exact to double precision, including the tail branch. Chosen over
// Box-Muller because the million-path pricing checks are normal-draw bound.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : gen_(seed) {}
  // Independent per-path stream: results depend only on (seed, stream).
  NormalSampler(std::uint64_t seed, std::uint64_t stream)
      : gen_(stream_seed(seed, stream)) {}

  double operator()();
  double uniform01() { return gen_.uniform01(); }

 private:
  double sample_tail(bool negative);
  Xoshiro256pp gen_;
};

}  // namespace polyfwd::rng
