#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "coopsim/errors.hpp"

namespace coopsim {

// splitmix64 finalizer; used to spread raw seed material before it reaches an
// engine and to derive independent sub-streams from one master seed.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Purpose tags keep sub-streams for different consumers from colliding even
// when their numeric ids coincide.
enum SeedStream : std::uint64_t {
  kStreamConfigSample = 1,
  kStreamScenarioSeed = 2,
  kStreamLayout = 3,
  kStreamPlacement = 4,
  kStreamDims = 5,
  kStreamCavSelect = 6,
  kStreamRangeNoise = 7,
  kStreamPoseNoise = 8,
  kStreamEgoSelect = 9,
  kStreamTestData = 10,
};

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = mix64(base ^ mix64(stream));
  h = mix64(h ^ mix64(a));
  h = mix64(h ^ mix64(b));
  return h;
}

// Deterministic random source. All draws go through explicit conversions so a
// stream replays bit-identically on any platform; no std::distribution is
// used anywhere.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw InternalError("uniform_int: empty range");
    const std::uint64_t n = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % n);
  }

  // Standard normal via Box-Muller. Two draws per value, no cached spare, so
  // the stream position is a pure function of the call count.
  double gaussian() {
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double gaussian(double mean, double sigma) {
    return mean + sigma * gaussian();
  }

  // Gaussian resampled until it lands within +/- bound of the mean.
  double truncated_gaussian(double mean, double sigma, double bound) {
    if (bound <= 0.0) throw InternalError("truncated_gaussian: bad bound");
    for (int i = 0; i < 1024; ++i) {
      const double v = gaussian(mean, sigma);
      if (std::abs(v - mean) <= bound) return v;
    }
    return mean;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 engine_;
};

}  // namespace coopsim
