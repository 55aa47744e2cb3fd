#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "pirf/grf.hpp"
#include "pirf/rng.hpp"
#include "pirf/solve.hpp"

using pirf::Array2;
using pirf::Vector;

namespace {

constexpr double pi = std::numbers::pi;

// Manufactured Darcy problem with exact Neumann walls:
//   u*(x,y) = cos(pi x) cos(2 pi y),  a(x,y) = 2 + 0.5 cos(pi x) cos(pi y).
Array2<double> manufactured_a(int n) {
  const double h = 1.0 / (n - 1);
  Array2<double> a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      a(i, j) = 2.0 + 0.5 * std::cos(pi * i * h) * std::cos(pi * j * h);
  return a;
}

Array2<double> manufactured_u(int n) {
  const double h = 1.0 / (n - 1);
  Array2<double> u(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) u(i, j) = std::cos(pi * i * h) * std::cos(2 * pi * j * h);
  return u;
}

Array2<double> manufactured_f(int n) {
  const double h = 1.0 / (n - 1);
  Array2<double> f(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = i * h, y = j * h;
      const double a = 2.0 + 0.5 * std::cos(pi * x) * std::cos(pi * y);
      const double ax = -0.5 * pi * std::sin(pi * x) * std::cos(pi * y);
      const double ay = -0.5 * pi * std::cos(pi * x) * std::sin(pi * y);
      const double u = std::cos(pi * x) * std::cos(2 * pi * y);
      const double ux = -pi * std::sin(pi * x) * std::cos(2 * pi * y);
      const double uy = -2 * pi * std::cos(pi * x) * std::sin(2 * pi * y);
      const double lap = -5.0 * pi * pi * u;
      f(i, j) = -(a * lap + ax * ux + ay * uy);
    }
  return f;
}

double darcy_manufactured_error(int n) {
  const Array2<double> u = pirf::solve_darcy(manufactured_a(n), manufactured_f(n));
  Array2<double> ref = manufactured_u(n);
  ref -= ref.mean();
  return std::sqrt((u - ref).square().sum() / ref.square().sum());
}

Array2<double> thresholded_sample(int n, std::uint64_t seed) {
  pirf::Rng rng(seed);
  const auto spec = pirf::GRFSpec::make(pirf::GrfTag::darcy_prior);
  return pirf::threshold_permeability(pirf::sample_grf2<double>(spec, n, n, rng));
}

}  // namespace

TEST_CASE("darcy solve converges on a manufactured Neumann problem") {
  const double e24 = darcy_manufactured_error(24);
  const double e48 = darcy_manufactured_error(48);
  INFO("errors ", e24, " -> ", e48);
  CHECK(e48 < 2e-2);
  CHECK(e24 / e48 > 2.5);
}

TEST_CASE("darcy solve respects grid transposition symmetry") {
  const int n = 32;
  const double h = 1.0 / (n - 1);
  Array2<double> a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      a(i, j) = std::cos(2 * pi * (i * h) * (j * h)) >= 0.3 ? 12.0 : 3.0;
  REQUIRE((a == a.transpose()).all());
  const Array2<double> u = pirf::solve_darcy(a);
  const double scale = u.abs().maxCoeff();
  CHECK(scale > 0.0);
  CHECK((u - u.transpose()).abs().maxCoeff() < 1e-7 * scale);
}

TEST_CASE("darcy solve on a thresholded field: zero mean, deterministic") {
  const Array2<double> a = thresholded_sample(32, 99);
  const Array2<double> u = pirf::solve_darcy(a);
  CHECK(u.isFinite().all());
  CHECK(u.abs().maxCoeff() > 0.0);
  CHECK(std::abs(u.mean()) < 1e-10);
  const Array2<double> v = pirf::solve_darcy(a);
  CHECK((u == v).all());
}

TEST_CASE("darcy solve rejects malformed input") {
  Array2<double> a = Array2<double>::Constant(16, 16, 5.0);
  a(3, 4) = -1.0;
  CHECK_THROWS_AS(pirf::solve_darcy(a), pirf::Error);
  CHECK_THROWS_AS(pirf::solve_darcy(Array2<double>::Constant(16, 12, 1.0)), pirf::Error);
  CHECK_THROWS_AS(
      pirf::solve_darcy(Array2<double>::Constant(16, 16, 1.0), Array2<double>::Ones(8, 8)),
      pirf::Error);
}

TEST_CASE("helmholtz solve is exact on discrete Dirichlet eigenfunctions") {
  const int n = 24, m = n - 2, p = 2, q = 3;
  const double h = 1.0 / (n - 1), k = 1.0;
  const double sp = std::sin(0.5 * p * pi * h), sq = std::sin(0.5 * q * pi * h);
  const double lam = 4.0 / (h * h) * (sp * sp + sq * sq);

  Array2<double> ustar(n, n), a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      ustar(i, j) = std::sin(p * pi * i * h) * std::sin(q * pi * j * h);
      a(i, j) = (k * k - lam) * ustar(i, j);
    }
  const Array2<double> u = pirf::solve_helmholtz(a, k);
  Array2<double> want(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      want(i, j) = ustar(i, j) * std::sin(pi * i * h) * std::sin(pi * j * h);
  CHECK((u - want).abs().maxCoeff() < 1e-9);
  (void)m;
}

TEST_CASE("poisson is the k = 0 path of the helmholtz solve") {
  const int n = 20, p = 1, q = 1;
  const double h = 1.0 / (n - 1);
  const double s1 = std::sin(0.5 * pi * h);
  const double lam = 8.0 / (h * h) * s1 * s1;
  Array2<double> ustar(n, n), a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      ustar(i, j) = std::sin(p * pi * i * h) * std::sin(q * pi * j * h);
      a(i, j) = -lam * ustar(i, j);
    }
  const Array2<double> u = pirf::solve_helmholtz(a, 0.0);
  Array2<double> want(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      want(i, j) = ustar(i, j) * std::sin(pi * i * h) * std::sin(pi * j * h);
  CHECK((u - want).abs().maxCoeff() < 1e-9);
}

TEST_CASE("helmholtz solve: zero source, zero walls, resonance guard") {
  const int n = 20;
  const Array2<double> zero = Array2<double>::Zero(n, n);
  const Array2<double> u0 = pirf::solve_helmholtz(zero, 1.0);
  CHECK((u0 == 0.0).all());

  pirf::Rng rng(3);
  const auto spec = pirf::GRFSpec::make(pirf::GrfTag::helmholtz_prior);
  const Array2<double> a = pirf::sample_grf2<double>(spec, n, n, rng);
  const Array2<double> u = pirf::solve_helmholtz(a, 1.0);
  for (int i = 0; i < n; ++i) {
    CHECK(u(i, 0) == 0.0);
    CHECK(u(i, n - 1) == 0.0);
    CHECK(u(0, i) == 0.0);
    CHECK(u(n - 1, i) == 0.0);
  }

  const double h = 1.0 / (n - 1);
  const double s1 = std::sin(0.5 * pi * h);
  const double lam11 = 8.0 / (h * h) * s1 * s1;
  CHECK_THROWS_AS(pirf::solve_helmholtz(a, std::sqrt(lam11)), pirf::Error);
}

TEST_CASE("burgers: constants persist, frame 0 is the input") {
  Vector<double> u0 = Vector<double>::Constant(32, 0.7);
  const Array2<double> traj = pirf::solve_burgers(u0, 6, 1.0 / 32.0);
  CHECK(traj.rows() == 6);
  CHECK(traj.cols() == 32);
  CHECK((traj.row(0).transpose() == u0).all());
  CHECK((traj - 0.7).abs().maxCoeff() < 1e-13);
}

TEST_CASE("burgers matches the viscous decay of a low-amplitude mode") {
  const int n = 128, frames = 17;
  const double eps = 1e-6, nu = 0.01, frame_dt = 1.0 / 128.0;
  Vector<double> u0(n);
  for (int j = 0; j < n; ++j) u0(j) = eps * std::sin(2 * pi * j / n);
  const Array2<double> traj = pirf::solve_burgers(u0, frames, frame_dt, nu);
  const double t = (frames - 1) * frame_dt;
  const double decay = std::exp(-nu * 4 * pi * pi * t);
  double worst = 0.0;
  for (int j = 0; j < n; ++j)
    worst = std::max(worst,
                     std::abs(traj(frames - 1, j) - eps * decay * std::sin(2 * pi * j / n)));
  INFO("max deviation ", worst);
  CHECK(worst < 1e-5 * eps);
}

TEST_CASE("burgers conserves the mean and dissipates energy") {
  pirf::Rng rng(17);
  const auto spec = pirf::GRFSpec::make(pirf::GrfTag::burgers_prior);
  const Vector<double> u0 = pirf::sample_grf1<double>(spec, 128, rng);
  const Array2<double> traj = pirf::solve_burgers(u0, 12, 1.0 / 128.0);
  CHECK(traj.isFinite().all());
  const double m0 = traj.row(0).mean();
  double prev = (traj.row(0) - m0).square().sum();
  for (int f = 1; f < traj.rows(); ++f) {
    CHECK(std::abs(traj.row(f).mean() - m0) < 1e-12);
    const double e = (traj.row(f) - m0).square().sum();
    CHECK(e <= prev * (1.0 + 1e-12));
    prev = e;
  }
}

TEST_CASE("burgers time integration is converged at the default substepping") {
  pirf::Rng rng(23);
  const auto spec = pirf::GRFSpec::make(pirf::GrfTag::burgers_prior);
  const Vector<double> u0 = pirf::sample_grf1<double>(spec, 128, rng);
  const Array2<double> coarse = pirf::solve_burgers(u0, 5, 1.0 / 128.0, 0.01, 8);
  const Array2<double> fine = pirf::solve_burgers(u0, 5, 1.0 / 128.0, 0.01, 32);
  const double diff = (coarse - fine).abs().maxCoeff();
  INFO("substep refinement moves the solution by ", diff);
  CHECK(diff < 1e-6);
}

TEST_CASE("kolmogorov reproduces the closed-form response to the forcing") {
  const int n = 32;
  const double dtau = 1.0 / 32.0, re = 1000.0;
  const Array2<double> u0 = Array2<double>::Zero(n, n);
  const auto frames = pirf::solve_kolmogorov(u0, 2, dtau, re, 1);
  REQUIRE(frames.size() == 2);
  const double lam = 16.0 / re + 0.1;
  const double amp = (1.0 - std::exp(-lam * dtau)) / lam;
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double want = -4.0 * std::cos(4.0 * (2 * pi * j / n)) * amp;
      worst = std::max(worst, std::abs(frames[1](i, j) - want));
    }
  INFO("max deviation ", worst);
  CHECK(worst < 1e-9);
}

TEST_CASE("kolmogorov keeps the vorticity mean at zero") {
  pirf::Rng rng(31);
  const auto spec = pirf::GRFSpec::make(pirf::GrfTag::kolmogorov_prior);
  Array2<double> u0 = pirf::sample_grf2<double>(spec, 32, 32, rng);
  u0 += 0.37;  // solver must remove the offset itself
  const auto frames = pirf::solve_kolmogorov(u0, 4, 1.0 / 32.0);
  CHECK((frames[0] - (u0 - u0.mean())).abs().maxCoeff() == 0.0);
  for (const auto& f : frames) {
    CHECK(f.isFinite().all());
    CHECK(std::abs(f.mean()) < 1e-13);
  }
}

TEST_CASE("kolmogorov time integration is converged at the default substepping") {
  pirf::Rng rng(37);
  const auto spec = pirf::GRFSpec::make(pirf::GrfTag::kolmogorov_prior);
  const Array2<double> u0 = pirf::sample_grf2<double>(spec, 32, 32, rng);
  const auto coarse = pirf::solve_kolmogorov(u0, 3, 1.0 / 32.0, 1000.0, 4);
  const auto fine = pirf::solve_kolmogorov(u0, 3, 1.0 / 32.0, 1000.0, 16);
  const double diff = (coarse[2] - fine[2]).abs().maxCoeff();
  INFO("substep refinement moves the solution by ", diff);
  CHECK(diff < 1e-8);
}

TEST_CASE("spectral truncation: identity, band-limited exactness, mean") {
  pirf::Rng rng(41);
  const auto spec = pirf::GRFSpec::make(pirf::GrfTag::kolmogorov_prior);
  const Array2<double> u = pirf::sample_grf2<double>(spec, 64, 64, rng);

  const Array2<double> same = pirf::spectral_truncate(u, 64, 64);
  CHECK((same - u).abs().maxCoeff() < 1e-11);

  // Band-limited field: modes up to |k| = 5 only, so truncation to 32 points
  // must agree with plain 2x subsampling.
  Array2<double> band(64, 64);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      const double x = 2 * pi * i / 64.0, y = 2 * pi * j / 64.0;
      band(i, j) = std::sin(3 * x) * std::cos(5 * y) + 0.5 * std::cos(2 * x + y) + 0.25;
    }
  const Array2<double> down = pirf::spectral_truncate(band, 32, 32);
  double worst = 0.0;
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j)
      worst = std::max(worst, std::abs(down(i, j) - band(2 * i, 2 * j)));
  CHECK(worst < 1e-11);

  const Array2<double> half = pirf::spectral_truncate(u, 32, 32);
  CHECK(half.isFinite().all());
  CHECK(std::abs(half.mean() - u.mean()) < 1e-12);
}
