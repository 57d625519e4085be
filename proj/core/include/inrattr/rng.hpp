#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace inrattr {

/// Deterministic random source. mt19937_64 has a standardized output
/// sequence, and the uniform/normal transforms below are hand-rolled so the
/// stream does not depend on the standard library's distribution
/// implementations. Identical seed, identical draws.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : gen_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    // Modulo bias is irrelevant for the small n used here.
    return gen_() % n;
  }

  /// Standard normal via Box-Muller, one cached value per pair.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Derives an independent generator for a named substream. Streams with
  /// different ids never share state with each other or with the parent.
  SeededRng fork(std::uint64_t stream) const {
    return SeededRng(splitmix(seed_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1))));
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 gen_;
  std::uint64_t seed_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace inrattr
