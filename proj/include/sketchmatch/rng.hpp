#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace sketchmatch {

// Deterministic random stream. All draws are derived from the raw mt19937_64
// output with fixed transforms so that a given seed reproduces the same
// sequence bit-for-bit on reruns; none of the distribution adapters from
// <random> are used because their output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 bits of randomness.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive range. Modulo bias is negligible for the ranges used here.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(eng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  // Box-Muller, one draw per call (no cached spare, keeps call order simple).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = eng_() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

  // Decorrelated child seed for per-item streams (splitmix64 of seed ^ id).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t z = seed ^ (stream_id + 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace sketchmatch
