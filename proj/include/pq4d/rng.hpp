#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace pq {

// Thin wrapper around std::mt19937_64 that derives every variate from raw
// 64-bit draws. The std::*_distribution adapters are implementation-defined,
// so going through them would break bit-reproducibility across standard
// libraries; these helpers keep seeded runs identical everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Requires n > 0.
  std::uint64_t next_below(std::uint64_t n) {
    // Rejection sampling over the largest multiple of n to avoid modulo bias.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates shuffle (in place), driven by next_below for portability.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[next_below(i)]);
    }
  }

  /// First m entries of a random permutation of {0..n-1}; m is clamped to n.
  std::vector<int> sample_without_replacement(int n, int m);

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

inline std::vector<int> Rng::sample_without_replacement(int n, int m) {
  if (m > n) m = n;
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  // Partial Fisher-Yates: only the first m slots need to be finalized.
  for (int i = 0; i < m; ++i) {
    const std::uint64_t j = static_cast<std::uint64_t>(i) + next_below(static_cast<std::uint64_t>(n - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(m));
  return idx;
}

/// Mixes a base seed with a stream id (e.g. per-view corruption streams) so
/// derived generators are decorrelated but reproducible. SplitMix64 finalizer.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace pq
