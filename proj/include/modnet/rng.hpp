#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "modnet/types.hpp"

namespace modnet {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic random stream. Distribution sampling is implemented by hand
// (not via std:: distributions) so that identical seeds give byte-identical
// output on any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // Independent substream keyed on (seed, ids...). Substreams derived with the
  // same key always yield the same sequence, regardless of draw order in
  // sibling streams.
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t id : ids) h = splitmix64(h ^ (0x9e3779b97f4a7c15ULL + id));
    Rng r(0);
    r.engine_.seed(h);
    return r;
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Standard normal via Box-Muller (spare discarded to keep streams simple).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Laplace(0, b) via inverse CDF.
  double laplace(double b) {
    double u = uniform() - 0.5;
    while (1.0 - 2.0 * std::abs(u) <= 0.0) u = uniform() - 0.5;
    const double s = u < 0.0 ? -1.0 : 1.0;
    return -b * s * std::log(1.0 - 2.0 * std::abs(u));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace modnet
