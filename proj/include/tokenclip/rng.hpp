#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace tokenclip {

// Deterministic RNG: mt19937_64 (standardized output sequence) with explicit
// uint64 -> double mappings, so streams are byte-identical across platforms.
// std::uniform_real_distribution / std::normal_distribution are deliberately
// avoided: their algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; two uniforms per draw, no cached spare
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // integer in [0, bound); bound must be positive
  uint64_t integer(uint64_t bound) { return gen_() % bound; }

  uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

// Fisher-Yates with the deterministic stream above.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.integer(i)]);
}

}  // namespace tokenclip
