#pragma once

#include <cstdint>
#include <random>

#include "evodiff/vec.hpp"

namespace evodiff {

// Stream tags for deriving independent substreams from one root seed.
// Adding a new consumer gets a new tag, so existing streams never shift.
enum class StreamTag : std::uint64_t {
  InitNoise = 1,
  DataSampling = 2,
  Metrics = 3,
  Projections = 4,
  Instances = 5,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based derivation: (root, tag, counter) -> one independent stream.
// mt19937_64 is fully specified by the standard; the normal transform is an
// explicit Box-Muller so outputs do not depend on the stdlib's
// normal_distribution implementation.
class RandomStream {
 public:
  RandomStream(std::uint64_t root_seed, StreamTag tag, std::uint64_t counter = 0)
      : engine_(splitmix64(splitmix64(root_seed ^ 0x6a09e667f3bcc908ULL) ^
                           splitmix64(static_cast<std::uint64_t>(tag) * 0x9e3779b97f4a7c15ULL + counter))) {}

  explicit RandomStream(std::uint64_t raw_seed) : engine_(raw_seed) {}

  // Uniform in (0, 1), never returning exactly 0 or 1.
  double uniform() {
    // 53-bit mantissa draw shifted into the open interval.
    const std::uint64_t u = engine_() >> 11;
    return (static_cast<double>(u) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  Vec normal_vec(std::size_t d) {
    Vec v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  std::uint64_t next_raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace evodiff
