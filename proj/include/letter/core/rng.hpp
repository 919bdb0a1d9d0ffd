#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace letter {

/// Seeded random source. The engine is std::mt19937_64, whose output stream is
/// fixed by the C++ standard; the distributions below are implemented here
/// because the std:: distributions are implementation-defined and would break
/// cross-platform reproducibility.
class SeededRng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64";

  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, unbiased.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (both variates used).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Index drawn proportionally to nonnegative weights.
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Independent child generator for a named sub-stream.
  SeededRng split(std::string_view tag) const { return SeededRng(derive_seed(seed_, tag)); }

  /// Deterministic seed derivation: SplitMix64 over the parent seed mixed with
  /// an FNV-1a hash of the tag.
  static std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace letter
