#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "saga/common.hpp"

namespace saga {

// Deterministic RNG: mt19937_64 (bit-exact across platforms by the C++
// standard) + hand-rolled Box-Muller so normal draws do not depend on the
// standard library's unspecified std::normal_distribution algorithm.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed), seed_(seed) {}

  // Derive an independent stream (e.g. per sample index) reproducibly from
  // the seed this Rng was constructed with.
  Rng fork(uint64_t salt) const {
    return Rng(seed_ ^ (salt * 0x9e3779b97f4a7c15ULL + 0x2545F4914F6CDD1DULL));
  }

  // Uniform in [0, 1).
  double uniform() {
    return (eng_() >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    SAGA_REQUIRE(n > 0, InvalidInput, "uniform_int: empty range");
    // Rejection sampling for an unbiased draw.
    uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= lim);
    return x % n;
  }

  // Standard normal via Box-Muller, caching the spare value.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  template <class T>
  void fill_normal(MatX<T>& m, double sigma) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        m(i, j) = static_cast<T>(normal() * sigma);
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  uint64_t seed_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace saga
