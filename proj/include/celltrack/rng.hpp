#pragma once

#include <cmath>
#include <cstdint>

namespace celltrack {

// splitmix64 finalizer; also used to fold stream keys into a seed.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Small deterministic generator (splitmix64 state walk). Streams are derived
// from a root seed plus a key path, so sub-streams keyed on e.g.
// (purpose, frame, cell) replay identically no matter what other streams drew.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix64(seed)) {}

  static Rng stream(std::uint64_t seed, std::uint64_t k0, std::uint64_t k1 = 0,
                    std::uint64_t k2 = 0, std::uint64_t k3 = 0) {
    std::uint64_t s = mix64(seed ^ 0x6a09e667f3bcc909ULL);
    s = mix64(s ^ k0);
    s = mix64(s ^ k1);
    s = mix64(s ^ k2);
    s = mix64(s ^ k3);
    return Rng(s);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; one fresh value per call.
  double normal(double sigma = 1.0) {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return sigma * r * std::cos(6.283185307179586477 * u2);
  }

  // Knuth multiplication method; fine for the small rates used here.
  int poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    double prod = 1.0;
    int k = 0;
    while (true) {
      prod *= uniform();
      if (prod <= limit) return k;
      ++k;
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace celltrack
