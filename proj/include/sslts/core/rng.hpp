#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace sslts {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic child-seed derivation: hash-chains the path onto the base
// seed so independent streams (per epoch, per batch item, per purpose)
// never collide or depend on call order.
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> path) {
  uint64_t s = splitmix64(base ^ 0x5851f42d4c957f2dULL);
  for (uint64_t p : path) s = splitmix64(s ^ splitmix64(p));
  return s;
}

// All randomness in the library flows through this wrapper. Gaussians use an
// explicit Box-Muller transform instead of std::normal_distribution so the
// value stream is identical across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one fresh pair per call, cosine branch.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n); n must be positive. Rejection-free modulo is
  // acceptable here: n is always far below 2^63 so the bias is negligible,
  // but we keep the standard unbiased rejection loop for exactness.
  int64_t randint(int64_t n) {
    uint64_t bound = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return static_cast<int64_t>(v % bound);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = randint(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace sslts
