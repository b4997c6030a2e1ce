#pragma once

#include <cstdint>

#include "icot/rng.hpp"

namespace icot {

/// State of the token-removal schedule.
///
/// The number of tokens removed at optimization step t is
/// min(floor(t / steps_per_drop + offset), cap), where offset is an
/// exponential draw resampled once per step and shared across the batch. The
/// deterministic part floor(t / steps_per_drop) grows by one every
/// steps_per_drop steps; the random offset occasionally previews one or two
/// deeper removals.
struct CurriculumState {
  std::int64_t t = 0;
  std::int64_t steps_per_drop = 500;
  double lambda = 4.0;
  double offset = 0.0;

  std::int64_t deterministic_level() const { return t / steps_per_drop; }
};

/// Draw from the exponential distribution with the given rate (mean 1/rate).
/// lambda is interpreted as the rate: at lambda = 4 the mean preview is 0.25
/// tokens, so the floor usually leaves the deterministic schedule untouched.
double sample_offset(double lambda, Rng& rng);

/// Fresh state at t = 0 with an initial offset drawn.
CurriculumState make_curriculum(std::int64_t steps_per_drop, double lambda, Rng& rng);

/// Tokens to remove for an example with cap removable tokens.
int removal_count(const CurriculumState& state, int cap);

struct AdvanceResult {
  CurriculumState state;
  bool reset = false;  // true exactly when the deterministic level increased
};

/// Steps the schedule by one: increments t, resamples the offset, and reports
/// whether the optimizer should be reset. The reset trigger depends only on
/// the deterministic level, never on the offset draw.
AdvanceResult advance(const CurriculumState& state, Rng& rng);

}  // namespace icot
