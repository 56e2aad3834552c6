#pragma once

#include <cstdint>
#include <vector>

namespace cgn {

/// Deterministic PRNG (xoshiro256** seeded through splitmix64).
///
/// Self-contained so that sampled streams are reproducible across
/// standard-library versions; `fork(tag)` derives an independent child
/// stream, which keeps per-sample generation order-free.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev);
  /// Uniform integer in [0, n).
  int uniform_int(int n);
  bool bernoulli(double p);

  Rng fork(std::uint64_t tag) const;

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

private:
  std::uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cgn
