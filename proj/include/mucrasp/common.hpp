// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mucrasp {

class MucraspError : public std::runtime_error {
 public:
  explicit MucraspError(const std::string& what) : std::runtime_error(what) {}
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named sub-seed derivation: every consumer of randomness gets its own stream
// (e.g. "data", "init", "random_pivots") so runs are reproducible per stage.
inline uint64_t sub_seed(uint64_t seed, std::string_view stream) {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a offset basis
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return splitmix64(seed ^ h);
}

// mt19937_64 core (bit-exact across implementations) with hand-rolled
// distributions; std:: distributions are implementation-defined and would
// break cross-toolchain reproducibility.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(splitmix64(seed)) {}

  uint64_t bits() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    if (n <= 0) throw MucraspError("uniform_int: n must be positive");
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t bound = ~uint64_t{0} - ~uint64_t{0} % un;
    uint64_t r;
    do {
      r = bits();
    } while (r >= bound);
    return static_cast<int>(r % un);
  }

  // Marsaglia polar method.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return mean + stddev * u * m;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from [0, n), in draw order.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Runs fn(i) for i in [0, n). jobs <= 1 runs inline. Callers must write
// results to per-index slots and reduce after the join, in index order, so
// output is identical for any job count.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace mucrasp
