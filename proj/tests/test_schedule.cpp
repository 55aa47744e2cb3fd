#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <pirf/schedule.hpp>

#include <cmath>

using pirf::NoiseSchedule;

TEST_CASE("ladder spans [sigma_min, sigma_max] and ends at zero") {
  for (int steps : {20, 40, 80}) {
    const auto s = NoiseSchedule::edm(steps);
    REQUIRE(int(s.sigma.size()) == steps + 1);
    CHECK(s.sigma[0] == doctest::Approx(80.0).epsilon(1e-12));
    CHECK(s.sigma[steps - 1] == doctest::Approx(0.002).epsilon(1e-12));
    CHECK(s.sigma[steps] == 0.0);
    for (int i = 1; i <= steps; ++i) CHECK(s.sigma[i] < s.sigma[i - 1]);
  }
}

TEST_CASE("vp view: alpha_bar starts at exactly 1 and strictly decreases") {
  const auto s = NoiseSchedule::edm(20);
  const auto ab = s.vp_alpha_bar();
  CHECK(ab[0] == 1.0);
  for (int t = 1; t <= s.steps; ++t) {
    CHECK(ab[t] < ab[t - 1]);
    CHECK(ab[t] > 0.0);
  }
}

TEST_CASE("beta lies in (0,1) and its cumulative product rebuilds alpha_bar") {
  const auto s = NoiseSchedule::edm(40);
  const auto ab = s.vp_alpha_bar();
  const auto beta = s.vp_beta();
  double prod = 1.0;
  for (int t = 1; t <= s.steps; ++t) {
    CHECK(beta[t] > 0.0);
    CHECK(beta[t] < 1.0);
    prod *= 1.0 - beta[t];
    CHECK(prod == doctest::Approx(ab[t]).epsilon(1e-12));
  }
}

TEST_CASE("the two views are a bijection that round-trips") {
  const auto s = NoiseSchedule::edm(80);
  for (int i = 0; i < s.steps; ++i) {
    const double ab = NoiseSchedule::alpha_bar_of_sigma(s.sigma[i]);
    const double back = NoiseSchedule::sigma_of_alpha_bar(ab);
    CHECK(back == doctest::Approx(s.sigma[i]).epsilon(1e-10));
  }
  // and through the beta parametrization
  const auto beta = s.vp_beta();
  double prod = 1.0;
  for (int t = 1; t <= s.steps; ++t) {
    prod *= 1.0 - beta[t];
    const double sig = NoiseSchedule::sigma_of_alpha_bar(prod);
    CHECK(sig == doctest::Approx(s.sigma[s.steps - t]).epsilon(1e-10));
  }
}

TEST_CASE("posterior variance follows the closed form and vanishes at t=1") {
  const auto s = NoiseSchedule::edm(20);
  CHECK(s.posterior_variance(1) == 0.0);
  for (int t = 2; t <= s.steps; ++t) {
    const double ab1 = s.alpha_bar(t - 1), ab = s.alpha_bar(t);
    const double want = (1.0 - ab1) / (1.0 - ab) * (1.0 - ab / ab1);
    CHECK(s.posterior_variance(t) == doctest::Approx(want).epsilon(1e-12));
    CHECK(s.posterior_variance(t) > 0.0);
    CHECK(s.posterior_variance(t) < s.beta(t));
  }
}

TEST_CASE("training sigma distribution matches its log-normal moments") {
  pirf::TrainingSigma dist;
  pirf::Rng rng(99);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double l = std::log(dist.sample(rng));
    sum += l;
    sumsq += l * l;
  }
  const double mean = sum / n;
  const double stdev = std::sqrt(sumsq / n - mean * mean);
  CHECK(std::abs(mean + 1.2) < 0.01);
  CHECK(std::abs(stdev - 1.2) < 0.01);
}

TEST_CASE("bad parameters are rejected") {
  CHECK_THROWS_AS(NoiseSchedule::edm(0), pirf::Error);
  CHECK_THROWS_AS(NoiseSchedule::edm(20, 1.0, 0.5), pirf::Error);
  // single-step ladder degenerates to one sigma_max -> 0 transition
  const auto one = NoiseSchedule::edm(1);
  CHECK(one.sigma[0] == 80.0);
  CHECK(one.sigma[1] == 0.0);
  CHECK_THROWS_AS(NoiseSchedule::edm(20).sigma_at(21), pirf::Error);
  CHECK_THROWS_AS(NoiseSchedule::edm(20).beta(0), pirf::Error);
}
