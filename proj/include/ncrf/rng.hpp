#pragma once

#include <cmath>
#include <cstdint>

namespace ncrf {

// Counter-based splitmix64 generator. Unlike std:: distributions the output
// sequence is fully pinned by this file, so seeded runs are reproducible
// across compilers and checkpoint round trips (state is a single u64).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  double normal() {
    // Box-Muller; one value per call keeps the stream position predictable.
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Derive an independent stream, e.g. per frame or per training step.
  Rng fork(uint64_t stream) const {
    Rng r(state_ ^ (0x632be59bd9b4e019ull * (stream + 1)));
    r.next_u64();
    return r;
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

}  // namespace ncrf
