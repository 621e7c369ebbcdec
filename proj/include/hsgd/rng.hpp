#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace hsgd {

/// Counter-based random stream. The state is a pure function of the key
/// (seed, stream, counter), so draws for worker j at iteration t never
/// depend on call order or thread count.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter)
      : state_(mix(mix(mix(seed ^ 0x243f6a8885a308d3ULL) ^ stream) ^ counter)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform in the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    // Lemire's multiply-shift; bias is negligible for the small bounds used here.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  /// Standard normal via Box-Muller. Both halves of the pair are used.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// splitmix64 finalizer.
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stream identifiers, so that different consumers of one seed never share draws.
namespace streams {
inline constexpr std::uint64_t kGradientNoise = 1;
inline constexpr std::uint64_t kMinibatch = 2;
inline constexpr std::uint64_t kParticipation = 3;
inline constexpr std::uint64_t kGrouping = 4;
inline constexpr std::uint64_t kJitter = 5;
inline constexpr std::uint64_t kProbe = 6;
inline constexpr std::uint64_t kDataset = 7;
inline constexpr std::uint64_t kMonteCarlo = 8;
}  // namespace streams

/// Combine a stream id with a sub-index (worker, group, round, ...).
inline constexpr std::uint64_t substream(std::uint64_t stream, std::uint64_t index) {
  return CounterRng::mix(stream * 0x100000001b3ULL + index);
}

}  // namespace hsgd
