#pragma once

// Deterministic random number utilities. The standard <random> distributions
// are implementation-defined, so the generator and all draws are hand-rolled
// to keep datasets and experiments bit-reproducible across toolchains.

#include <cmath>
#include <cstdint>

namespace tda {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256++, seeded via splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  // Derives an independent stream, e.g. per (seed, location, traversal).
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t sm = seed;
    std::uint64_t mix = splitmix64(sm);
    sm = mix ^ (a * 0x9e3779b97f4a7c15ULL);
    mix = splitmix64(sm);
    sm = mix ^ (b * 0xc2b2ae3d27d4eb4fULL);
    mix = splitmix64(sm);
    sm = mix ^ (c * 0x165667b19e3779f9ULL);
    return Rng(splitmix64(sm));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t uniform_index(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Standard normal via Box-Muller (cosine branch), clipped to +-3 sigma so
  // sampled noise has bounded support.
  double normal_clipped(double sigma) {
    if (sigma <= 0.0) return 0.0;
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    double n = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    if (n > 3.0) n = 3.0;
    if (n < -3.0) n = -3.0;
    return n * sigma;
  }

  // Knuth's product method; fine for the small rates used here.
  int poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    int k = 0;
    double prod = 1.0;
    do {
      ++k;
      prod *= uniform();
    } while (prod > limit);
    return k - 1;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

}  // namespace tda
