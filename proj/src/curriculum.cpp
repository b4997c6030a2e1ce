#include "icot/curriculum.hpp"

#include <algorithm>
#include <cmath>

#include "icot/errors.hpp"

namespace icot {

double sample_offset(double lambda, Rng& rng) { return rng.exponential(lambda); }

CurriculumState make_curriculum(std::int64_t steps_per_drop, double lambda, Rng& rng) {
  if (steps_per_drop < 1) throw ConfigError("curriculum: steps_per_drop must be positive");
  if (!(lambda > 0.0)) throw ConfigError("curriculum: lambda must be positive");
  CurriculumState state;
  state.steps_per_drop = steps_per_drop;
  state.lambda = lambda;
  state.offset = sample_offset(lambda, rng);
  return state;
}

int removal_count(const CurriculumState& state, int cap) {
  if (cap < 0) throw DataError("removal_count: cap must be non-negative");
  const double level =
      static_cast<double>(state.t) / static_cast<double>(state.steps_per_drop) + state.offset;
  const double floored = std::floor(level);
  if (floored >= static_cast<double>(cap)) return cap;
  return static_cast<int>(floored);
}

AdvanceResult advance(const CurriculumState& state, Rng& rng) {
  AdvanceResult result;
  result.state = state;
  const std::int64_t before = state.deterministic_level();
  result.state.t = state.t + 1;
  result.state.offset = sample_offset(state.lambda, rng);
  result.reset = result.state.deterministic_level() > before;
  return result;
}

}  // namespace icot
