#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace cfedavg {

// Trajectories must be byte-identical across platforms and across worker
// scheduling, so nothing here uses std:: distributions (their output is
// implementation-defined). Streams are derived from the master seed by
// hashing, never by drawing, which keeps workers independent of execution
// interleaving.

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Labels keep streams for different uses disjoint even at equal
// (worker, round, step) coordinates.
enum class StreamUse : std::uint64_t {
  kInit = 1,
  kData = 2,
  kPartition = 3,
  kBatch = 4,
  kCompress = 5,
  kProbe = 6,
};

inline std::uint64_t derive_stream(std::uint64_t master, StreamUse use,
                                   std::uint64_t worker = 0, std::uint64_t round = 0,
                                   std::uint64_t step = 0) {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ static_cast<std::uint64_t>(use));
  h = mix64(h ^ worker);
  h = mix64(h ^ round);
  h = mix64(h ^ step);
  return h;
}

// SplitMix64 stream with hand-rolled double/normal/int draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; draws two uniforms, no cached spare.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    // Guard log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // First `count` positions of a Fisher-Yates pass over `pool`; the sampled
  // prefix is what the caller reads.
  template <typename T>
  void partial_shuffle(std::vector<T>& pool, std::size_t count) {
    for (std::size_t i = 0; i < count && i + 1 < pool.size(); ++i) {
      std::size_t j = i + static_cast<std::size_t>(uniform_below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace cfedavg
