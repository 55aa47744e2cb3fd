#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "pirf/grf.hpp"
#include "pirf/rng.hpp"
#include "pirf/spectral.hpp"

using pirf::Array2;
using pirf::GRFSpec;
using pirf::GrfTag;

TEST_CASE("grf presets carry the prior parameters") {
  const auto darcy = GRFSpec::make(GrfTag::darcy_prior);
  CHECK(darcy.dim == 2);
  CHECK(darcy.mode_variance(0.0) == doctest::Approx(1.0 / 81.0).epsilon(1e-12));
  CHECK(darcy.mode_variance(1.0) == doctest::Approx(1.0 / 100.0).epsilon(1e-12));

  const auto helm = GRFSpec::make(GrfTag::helmholtz_prior);
  CHECK(helm.dim == 2);
  CHECK(helm.mode_variance(0.0) == doctest::Approx(5.0 / 81.0).epsilon(1e-12));

  const auto burgers = GRFSpec::make(GrfTag::burgers_prior);
  CHECK(burgers.dim == 1);
  CHECK(burgers.mode_variance(0.0) == doctest::Approx(1.0 / 625.0).epsilon(1e-12));
  CHECK(burgers.mode_variance(1.0) == doctest::Approx(1.0 / 676.0).epsilon(1e-12));

  const auto kolm = GRFSpec::make(GrfTag::kolmogorov_prior);
  CHECK(kolm.mode_variance(0.0) ==
        doctest::Approx(std::pow(7.0, 1.5) * std::pow(49.0, -2.5)).epsilon(1e-12));
}

TEST_CASE("2-d samples are deterministic in the seed and real-valued") {
  const auto spec = GRFSpec::make(GrfTag::darcy_prior);
  pirf::Rng r1(42), r2(42), r3(43);
  const auto a = pirf::sample_grf2<double>(spec, 32, 32, r1);
  const auto b = pirf::sample_grf2<double>(spec, 32, 32, r2);
  const auto c = pirf::sample_grf2<double>(spec, 32, 32, r3);
  CHECK((a == b).all());
  CHECK((a - c).abs().maxCoeff() > 1e-6);
  CHECK(a.isFinite().all());
  CHECK(a.rows() == 32);
  CHECK(a.cols() == 32);
}

TEST_CASE("2-d spectrum matches the prescribed mode variances") {
  const auto spec = GRFSpec::make(GrfTag::darcy_prior);
  const int n = 32, draws = 2000;
  const pirf::Spectral2<double> sp(n, n, 1.0, 1.0);
  pirf::Rng rng(7);

  // Accumulate E |fft2(x)/n^2|^2 on a set of low modes plus one high mode.
  const std::vector<std::pair<int, int>> modes = {{0, 0}, {0, 1}, {1, 0},  {1, 1},
                                                  {2, 0}, {0, 2}, {31, 1}, {3, 2}};
  std::vector<double> acc(modes.size(), 0.0);
  for (int d = 0; d < draws; ++d) {
    const auto x = pirf::sample_grf2<double>(spec, n, n, rng);
    const auto z = sp.fft2(x);
    for (size_t m = 0; m < modes.size(); ++m) {
      const auto c = z(modes[m].first, modes[m].second) / (double(n) * n);
      acc[m] += std::norm(c);
    }
  }
  for (size_t m = 0; m < modes.size(); ++m) {
    const double k0 = pirf::fft_freq(modes[m].first, n);
    const double k1 = pirf::fft_freq(modes[m].second, n);
    const double want = spec.mode_variance(k0 * k0 + k1 * k1);
    const double got = acc[m] / draws;
    INFO("mode (", modes[m].first, ",", modes[m].second, ") got ", got, " want ", want);
    CHECK(std::abs(got - want) < 0.2 * want);
  }
}

TEST_CASE("pixel variance equals the sum of mode variances") {
  const auto spec = GRFSpec::make(GrfTag::helmholtz_prior);
  const int n = 32, draws = 400;
  double want = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double k0 = pirf::fft_freq(i, n), k1 = pirf::fft_freq(j, n);
      want += spec.mode_variance(k0 * k0 + k1 * k1);
    }
  pirf::Rng rng(11);
  double acc = 0.0;
  for (int d = 0; d < draws; ++d)
    acc += pirf::sample_grf2<double>(spec, n, n, rng).square().mean();
  const double got = acc / draws;
  INFO("pixel variance got ", got, " want ", want);
  CHECK(std::abs(got - want) < 0.1 * want);
}

TEST_CASE("1-d samples are deterministic and match the prior spectrum") {
  const auto spec = GRFSpec::make(GrfTag::burgers_prior);
  pirf::Rng r1(5), r2(5);
  const auto u = pirf::sample_grf1<double>(spec, 128, r1);
  const auto v = pirf::sample_grf1<double>(spec, 128, r2);
  CHECK((u == v).all());
  CHECK(u.size() == 128);
  CHECK(u.isFinite().all());

  const int n = 128, draws = 2000;
  const pirf::Spectral1<double> sp(n, 1.0);
  pirf::Rng rng(9);
  double dc = 0.0, k1 = 0.0, k5 = 0.0;
  for (int d = 0; d < draws; ++d) {
    const auto x = pirf::sample_grf1<double>(spec, n, rng);
    const auto z = sp.fft(x);
    dc += std::norm(z(0) / double(n));
    k1 += std::norm(z(1) / double(n));
    k5 += std::norm(z(5) / double(n));
  }
  CHECK(std::abs(dc / draws - spec.mode_variance(0.0)) < 0.2 * spec.mode_variance(0.0));
  CHECK(std::abs(k1 / draws - spec.mode_variance(1.0)) < 0.2 * spec.mode_variance(1.0));
  CHECK(std::abs(k5 / draws - spec.mode_variance(25.0)) < 0.2 * spec.mode_variance(25.0));
}

TEST_CASE("derived per-sample seeds decorrelate fields") {
  const auto spec = GRFSpec::make(GrfTag::darcy_prior);
  pirf::Rng ra(pirf::derive_seed(1234, 0)), rb(pirf::derive_seed(1234, 1));
  const auto a = pirf::sample_grf2<double>(spec, 16, 16, ra);
  const auto b = pirf::sample_grf2<double>(spec, 16, 16, rb);
  CHECK((a - b).abs().maxCoeff() > 1e-6);
}

TEST_CASE("thresholding maps sign to the two permeability levels") {
  Array2<double> mu(2, 3);
  mu << -0.5, 0.0, 0.25, 1e-12, -1e-12, 3.0;
  const auto a = pirf::threshold_permeability(mu);
  CHECK(a(0, 0) == 3.0);
  CHECK(a(0, 1) == 12.0);  // threshold itself counts as high
  CHECK(a(0, 2) == 12.0);
  CHECK(a(1, 0) == 12.0);
  CHECK(a(1, 1) == 3.0);
  CHECK(a(1, 2) == 12.0);
  CHECK(((a == 3.0) || (a == 12.0)).all());
}
