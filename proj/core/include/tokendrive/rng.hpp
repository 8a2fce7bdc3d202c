#pragma once

#include <cmath>
#include <cstdint>

namespace tokendrive {

// Deterministic 64-bit generator (splitmix64). All randomness in the project
// goes through this class: the std:: distributions are implementation-defined
// and would break byte-identical replays across library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n == 0 returns 0.
  uint64_t uniform_index(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Derives an independent stream, e.g. one per route or per MC rollout.
  // Forking does not advance this generator.
  Rng fork(uint64_t salt) const {
    Rng r(state_ ^ ((salt + 0x632be59bd9b4e019ull) * 0x9e3779b97f4a7c15ull));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
};

}  // namespace tokendrive
