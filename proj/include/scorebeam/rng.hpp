#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <vector>

namespace scorebeam {

/// Deterministic random source. Uses std::mt19937_64 for raw bits (exactly
/// specified by the standard) with library-owned uniform/normal transforms,
/// so streams are reproducible across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  /// Independent stream derived from this generator's base seed and a
  /// stream id. Derivation depends only on (seed, stream), never on how
  /// many draws have been consumed, so per-sample streams are order-free.
  Rng derive(uint64_t stream) const;

  uint64_t next_u64() { return gen_(); }

  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  /// Unbiased integer in [0, n).
  int64_t uniform_int(int64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  /// CN(0, var): re and im each N(0, var/2).
  std::complex<double> cnormal(double var);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

  uint64_t base_seed() const { return seed_; }

 private:
  std::mt19937_64 gen_;
  uint64_t seed_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace scorebeam
