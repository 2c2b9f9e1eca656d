#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "charkb/tensor.hpp"

namespace charkb {

/// Seeded RNG with hand-rolled distributions so that streams are stable for a
/// given seed regardless of standard-library internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1).
  double next_unit() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// Uniform index in [0, n).
  int64_t index(int64_t n) {
    return static_cast<int64_t>(next_unit() * static_cast<double>(n)) % n;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(index(i + 1))]);
    }
  }

  /// Child stream derived from this one; keeps per-purpose streams decoupled.
  Rng split() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ull); }

 private:
  std::mt19937_64 gen_;
};

/// Fills a tensor with samples from U[-1/weight_count, 1/weight_count], the
/// initialization used for every trainable layer.
template <class S>
Tensor<S> uniform_init(int64_t layer_weight_count, std::vector<int64_t> shape, Rng& rng) {
  if (layer_weight_count < 1) {
    throw Error("uniform_init: layer weight count must be >= 1");
  }
  const double bound = 1.0 / static_cast<double>(layer_weight_count);
  Tensor<S> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace charkb
