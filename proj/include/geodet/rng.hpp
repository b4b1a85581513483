#pragma once

// Seeded random draws with platform-independent results. The standard
// distributions are implementation-defined, so uniform and normal draws are
// derived from the raw mt19937_64 stream here.

#include <cmath>
#include <cstdint>
#include <random>

#include "geodet/linalg.hpp"

namespace geodet {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * n) % n; }

  /// Standard normal via Box-Muller (one draw per call, no caching).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  Vec3d normal3() {
    const double a = normal();
    const double b = normal();
    return {a, b, normal()};
  }

  /// Uniformly distributed unit vector.
  Vec3d unit_vector() {
    Vec3d v = normal3();
    double n = norm(v);
    while (n < 1e-12) {
      v = normal3();
      n = norm(v);
    }
    return v / n;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace geodet
