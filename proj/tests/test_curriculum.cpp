#include <doctest.h>

#include <cmath>

#include "icot/curriculum.hpp"
#include "icot/errors.hpp"

using namespace icot;

namespace {

CurriculumState state_at(std::int64_t t, std::int64_t T, double offset, double lambda = 4.0) {
  CurriculumState s;
  s.t = t;
  s.steps_per_drop = T;
  s.lambda = lambda;
  s.offset = offset;
  return s;
}

}  // namespace

TEST_CASE("removal count formula") {
  CHECK(removal_count(state_at(1000, 500, 0.0), 30) == 2);
  CHECK(removal_count(state_at(24000, 500, 0.0), 21) == 21);  // cap binds: 48 > 21
  CHECK(removal_count(state_at(499, 500, 0.9), 10) == 1);     // floor(0.998 + 0.9) = 1
  CHECK(removal_count(state_at(0, 500, 0.0), 10) == 0);
  CHECK(removal_count(state_at(0, 1, 0.0), 0) == 0);
}

TEST_CASE("removal count against the brute-force grid oracle") {
  for (std::int64_t T : {1, 500, 2000}) {
    for (double o : {0.0, 0.3, 1.7, 5.0}) {
      for (int K : {0, 1, 21, 40}) {
        for (std::int64_t t = 0; t <= 50000; t += 97) {
          const double oracle_level = std::floor(static_cast<double>(t) / static_cast<double>(T) + o);
          const int oracle = static_cast<int>(std::min(oracle_level, static_cast<double>(K)));
          CHECK(removal_count(state_at(t, T, o), K) == oracle);
        }
      }
    }
  }
}

TEST_CASE("for fixed offset the schedule is monotone and capped") {
  for (double o : {0.0, 0.4, 2.2}) {
    int prev = 0;
    for (std::int64_t t = 0; t <= 5000; ++t) {
      const int s = removal_count(state_at(t, 250, o), 9);
      CHECK(s >= prev);
      CHECK(s <= 9);
      prev = s;
    }
    CHECK(prev == 9);  // reaches the cap within T * K steps plus offset slack
  }
}

TEST_CASE("offset draws are exponential with rate lambda") {
  Rng rng(13);
  const std::size_t n = 100000;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double draw = sample_offset(4.0, rng);
    CHECK(draw >= 0.0);
    sum += draw;
  }
  const double mean = sum / static_cast<double>(n);
  // mean 1/lambda = 0.25, standard error 0.25 / sqrt(n)
  const double se = 0.25 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean - 0.25) < 3.0 * se);
}

TEST_CASE("offset draws are reproducible under a fixed seed") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(sample_offset(4.0, a) == sample_offset(4.0, b));
}

TEST_CASE("invalid parameters are rejected") {
  Rng rng(0);
  CHECK_THROWS_AS(sample_offset(0.0, rng), ConfigError);
  CHECK_THROWS_AS(sample_offset(-1.0, rng), ConfigError);
  CHECK_THROWS_AS(make_curriculum(0, 4.0, rng), ConfigError);
  CHECK_THROWS_AS(removal_count(state_at(0, 500, 0.0), -1), DataError);
}

TEST_CASE("advance resets exactly when the deterministic level increases") {
  Rng rng(3);
  CurriculumState s = make_curriculum(500, 4.0, rng);
  int resets = 0;
  for (std::int64_t step = 0; step < 2500; ++step) {
    const auto adv = advance(s, rng);
    if (adv.reset) {
      ++resets;
      CHECK(adv.state.t % 500 == 0);
    }
    s = adv.state;
  }
  CHECK(resets == 5);  // t reached 2500: resets at 500, 1000, 1500, 2000, 2500
  CHECK(s.t == 2500);
}

TEST_CASE("every window of T steps contains exactly one reset") {
  Rng rng(8);
  CurriculumState s = make_curriculum(7, 4.0, rng);
  std::vector<bool> resets;
  for (int step = 0; step < 700; ++step) {
    const auto adv = advance(s, rng);
    resets.push_back(adv.reset);
    s = adv.state;
  }
  for (std::size_t w = 0; w + 7 <= resets.size(); w += 7) {
    int count = 0;
    for (std::size_t i = w; i < w + 7; ++i) count += resets[i];
    CHECK(count == 1);
  }
}

TEST_CASE("with the offset frozen at zero the schedule is the step function") {
  for (std::int64_t t = 0; t <= 1000; ++t) {
    const int expected = static_cast<int>(t / 500);
    CHECK(removal_count(state_at(t, 500, 0.0), 100) == expected);
  }
}

TEST_CASE("realized removal distribution matches the exponential tail") {
  // For fixed t, P(floor(t/T + o) = k) = F(k+1-a) - F(max(0, k-a)) with
  // a = t/T and F the Exp(lambda) cdf.
  const double lambda = 4.0;
  const std::int64_t t = 1234, T = 500;
  const double a = static_cast<double>(t) / static_cast<double>(T);
  const int base = static_cast<int>(std::floor(a));
  auto cdf = [&](double x) { return x <= 0.0 ? 0.0 : 1.0 - std::exp(-lambda * x); };

  Rng rng(31);
  const std::size_t n = 100000;
  std::vector<std::size_t> counts(base + 6, 0);
  for (std::size_t i = 0; i < n; ++i) {
    CurriculumState s = state_at(t, T, sample_offset(lambda, rng), lambda);
    const int k = removal_count(s, 1000);
    CHECK(k >= base);
    if (k < static_cast<int>(counts.size())) ++counts[static_cast<std::size_t>(k)];
  }
  for (int k = base; k < base + 4; ++k) {
    const double p = cdf(k + 1 - a) - cdf(k - a);
    const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    const double observed = static_cast<double>(counts[static_cast<std::size_t>(k)]) /
                            static_cast<double>(n);
    CHECK(std::abs(observed - p) < 3.0 * se + 1e-9);
  }
}
