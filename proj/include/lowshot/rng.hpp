#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lowshot {

// splitmix64; used to derive independent child streams from one master seed.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return mix_seed(a ^ mix_seed(b));
}

// Deterministic RNG. The normal/uniform transforms are written out here
// instead of using std::*_distribution, whose output is
// implementation-defined; identical seeds must give identical streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix_seed(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // in [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // in [0, n)
  std::size_t uniform_index(std::size_t n) {
    // modulo bias is negligible for desk-scale n against 2^64
    return static_cast<std::size_t>(engine_() % n);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream; depends only on the constructing seed and the
  // stream tag, never on how much of this stream was consumed.
  Rng split(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace lowshot
