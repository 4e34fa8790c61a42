#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace scoup {

/// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for the stream identified by (master, phase, repetition, mode).
/// Streams are keyed by identity, never by execution order.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t phase,
                                    std::uint64_t repetition,
                                    std::uint64_t mode) noexcept {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ (phase + 0x100));
  h = mix64(h ^ (repetition + 0x10000));
  h = mix64(h ^ (mode + 0x1000000));
  return h;
}

/// mt19937_64 has a standardized output sequence; the [0,1) mapping below
/// avoids the implementation-defined std::uniform_real_distribution so runs
/// are reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    // Box-Muller on our own uniforms, again for portability.
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace scoup
