#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace amalgam {

/// SplitMix64 step; used to decorrelate derived seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d4a87715485eb5ULL;
  return z ^ (z >> 31);
}

/// Seed for stream `index` of a run keyed by `seed`. Streams for distinct
/// indices are independent, so trials can run in any order.
inline std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = seed;
  (void)splitmix64(s);
  s ^= 0x6a09e667f3bcc909ULL * (index + 1);
  return splitmix64(s);
}

/// Deterministic standard-normal stream: mt19937_64 bits fed through
/// Box-Muller. Both halves are fully specified, so the stream is
/// reproducible across platforms and toolchains.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t stream_seed) : engine_(stream_seed) {}

  double uniform01() {
    // 53-bit mantissa, shifted into (0, 1].
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace amalgam
