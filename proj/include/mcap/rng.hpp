#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

namespace mcap {

// Seeded generator wrapper. All randomness in the project flows through this
// so that a run is reproducible bit-for-bit from its seeds.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen_);
  }

  double normal(double mean, double sd) {
    std::normal_distribution<double> d(mean, sd);
    return d(gen_);
  }

  // Inclusive bounds.
  int uniform_int(int lo, int hi) {
    std::uniform_int_distribution<int> d(lo, hi);
    return d(gen_);
  }

  uint64_t next_u64() { return gen_(); }

  template <class It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, gen_);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace mcap
