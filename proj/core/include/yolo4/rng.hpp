#pragma once

#include <cstdint>

namespace yolo4 {

/// Seeded pseudo-random stream (splitmix64). Sequences are identical on every
/// platform for the same seed.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) noexcept {
    const auto span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo + 1);
    return lo + static_cast<int>(next_u64() % span);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Standard normal via Box-Muller.
  double normal() noexcept;

  /// Independent stream for worker `index`, seeded with seed ^ index.
  static RandomSource for_worker(std::uint64_t base_seed, std::uint64_t index) noexcept {
    return RandomSource(base_seed ^ index);
  }

 private:
  std::uint64_t state_;
};

}  // namespace yolo4
