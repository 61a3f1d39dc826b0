#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "uadrs/core/tensor.hpp"

namespace uadrs {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic RNG with cheap derived substreams. Gaussian sampling is
/// Box-Muller on top of mt19937_64 so results do not depend on the standard
/// library's distribution implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(splitmix64(seed)), seed_(seed) {}

  uint64_t seed() const { return seed_; }

  /// Independent substream identified by up to three integer labels.
  Rng fork(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
    uint64_t s = splitmix64(seed_ ^ splitmix64(a ^ splitmix64(b ^ splitmix64(c))));
    return Rng(s);
  }

  double uniform() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Inclusive integer range.
  int64_t randint(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(engine_() % span);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  void fill_normal(Tensor& t, float mean = 0.0f, float stddev = 1.0f) {
    for (int64_t i = 0; i < t.size(); ++i)
      t[i] = mean + stddev * static_cast<float>(normal());
  }

  void fill_uniform(Tensor& t, float lo, float hi) {
    for (int64_t i = 0; i < t.size(); ++i)
      t[i] = static_cast<float>(uniform(lo, hi));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(engine_() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  uint64_t seed_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace uadrs
