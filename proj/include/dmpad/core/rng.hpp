#pragma once

#include <cstdint>
#include <span>

namespace dmpad {

/// Counter-based SplitMix64 generator.
///
/// The i-th draw of a stream is `mix(key + (i + 1) * 0x9E3779B97F4A7C15)`, where
/// `key` is derived from (seed, stream). Every derived quantity (uniform reals,
/// bounded integers, normals) is computed with explicit integer arithmetic so
/// sequences are reproducible on any platform and in any language.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Unbiased (rejection on the top of the range).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal();

  /// Independent child stream; does not advance this generator.
  Rng fork(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

}  // namespace dmpad
