#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cvpurify {

/// splitmix64 finalizer; good avalanche, used for seed derivation only.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent per-stream seed from a master seed.  Streams can
/// be consumed in any order and from any thread, so results never depend on
/// the degree of parallelism.
inline std::uint64_t derive_stream_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) + stream);
}

/// Deterministic Gaussian stream: mt19937_64 (whose output sequence is
/// pinned by the standard) plus an explicit Box-Muller transform, so the
/// draws for a given seed are identical across standard-library
/// implementations -- std::normal_distribution is not.
class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]; keeps the log finite
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cvpurify
