#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "icot/errors.hpp"

namespace icot {

/// Seedable random source with portable derived draws.
///
/// The raw stream comes from std::mt19937_64, whose output sequence is fixed
/// by the standard. All distribution transforms are implemented here instead
/// of going through std:: distributions, so a (seed, call sequence) pair
/// produces the same values on every platform. Run fixtures depend on that.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) via rejection sampling. bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound) {
    if (bound == 0) throw ConfigError("uniform_below: bound must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  /// Exponential draw with the given rate (mean 1/rate).
  double exponential(double rate) {
    if (!(rate > 0.0)) throw ConfigError("exponential: rate must be positive");
    return -std::log1p(-uniform()) / rate;
  }

  /// Standard normal via Box-Muller. Draws two uniforms per call.
  double normal() {
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Engine state as text, suitable for checkpoints.
  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  static Rng deserialize(const std::string& state) {
    Rng rng;
    std::istringstream is(state);
    is >> rng.engine_;
    if (is.fail()) throw DataError("Rng::deserialize: malformed engine state");
    return rng;
  }

private:
  std::mt19937_64 engine_;
};

}  // namespace icot
