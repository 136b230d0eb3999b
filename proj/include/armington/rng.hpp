#pragma once

// Deterministic random sources for the simulator. All draws derive from a
// single user seed; distribution code is spelled out here (rather than using
// std::normal_distribution) so that equal seeds give identical panels on any
// standard library.

#include <cstdint>
#include <cmath>
#include <random>

#include "armington/errors.hpp"

namespace armington {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Independent stream seed for (base, stream). Used for shock-type streams and
// for per-replication seeds in the Monte Carlo driver.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t s = base ^ (0xD1B54A32D192ED03ull + stream * 0x9E3779B97F4A7C15ull);
  splitmix64(s);
  return splitmix64(s);
}

enum class ShockDist { gaussian, student_t };

// Standard normal (Box-Muller) and unit-variance Student-t draws on top of
// mt19937_64. The spare Box-Muller value is cached.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : engine_(seed) {}

  double uniform01() {
    // 53-bit mantissa uniform in (0, 1]
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Student-t with integer df >= 3, scaled to unit variance.
  double student_t(int df) {
    if (df < 3) throw NumericalError("student_t: df must be >= 3 for finite variance");
    double chi2 = 0.0;
    for (int j = 0; j < df; ++j) {
      const double z = normal();
      chi2 += z * z;
    }
    const double t = normal() / std::sqrt(chi2 / df);
    return t * std::sqrt((df - 2.0) / df);
  }

  double draw(ShockDist dist, int t_df) {
    return dist == ShockDist::gaussian ? normal() : student_t(t_df);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace armington
