#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace c3dm {

// Deterministic random stream. Draws are derived from raw mt19937_64 output
// instead of std::*_distribution so sequences are stable across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_base_(seed), eng_(mix(seed)) {}

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    const double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Independent child stream; distinct ids give decorrelated streams.
  Rng fork(std::uint64_t stream_id) const {
    return Rng(mix(seed_base_ ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1))));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer.
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_base_;
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace c3dm
