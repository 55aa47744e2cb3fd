#pragma once

#include <Eigen/Sparse>

#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "pirf/common.hpp"
#include "pirf/spectral.hpp"
#include "pirf/stencil.hpp"

namespace pirf {

// Reference solvers used to generate training data. All of them run in double
// precision; storage precision is the caller's concern.

namespace detail {

// Mirror across the boundary node: index -1 -> 1, n -> n-2. Encodes a zero
// normal derivative at walls for central differences on the closed grid.
inline int mirror_index(int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); }

inline void check_square_positive(const Array2<double>& a, const char* who) {
  require(a.rows() == a.cols() && a.rows() >= 8,
          std::string(who) + ": expects a square grid with n >= 8");
  require(a.isFinite().all(), std::string(who) + ": input contains non-finite values");
}

}  // namespace detail

// Steady Darcy pressure: div(-a grad u) = f with no-flux walls and zero mean.
//
// The expanded operator a lap(u) + grad(a) . grad(u) is discretized with
// central differences; wall stencils use mirrored neighbours so the normal
// derivative of u vanishes. The no-flux condition makes a constant source
// incompatible, so the square system (plus a mean-zero constraint row) is
// solved in the least-squares sense via the bordered normal equations.
inline Array2<double> solve_darcy(const Array2<double>& a, const Array2<double>& f) {
  detail::check_square_positive(a, "solve_darcy");
  require((a > 0.0).all(), "solve_darcy: permeability must be positive");
  const int n = static_cast<int>(a.rows());
  require(f.rows() == n && f.cols() == n, "solve_darcy: source shape mismatch");
  const int N = n * n;
  const double h = 1.0 / (n - 1);
  const double ih2 = 1.0 / (h * h), i2h = 1.0 / (2.0 * h);

  // Coefficient gradients are forward one-sided. For thresholded permeability
  // the assembled rows then localize each jump on one side of the interface,
  // which is what gives the datasets their characteristic residual scale
  // under central evaluation stencils. Do not "fix" this to central.
  Array2<double> a0(n, n), a1(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      a0(i, j) = (a(std::min(i + 1, n - 1), j) - a(i, j)) / h;
      a1(i, j) = (a(i, std::min(j + 1, n - 1)) - a(i, j)) / h;
    }

  const auto idx = [n](int i, int j) { return i * n + j; };
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(5) * N);
  Eigen::VectorXd b(N);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int r = idx(i, j);
      const double c = a(i, j) * ih2;
      trips.emplace_back(r, idx(detail::mirror_index(i + 1, n), j), c + a0(i, j) * i2h);
      trips.emplace_back(r, idx(detail::mirror_index(i - 1, n), j), c - a0(i, j) * i2h);
      trips.emplace_back(r, idx(i, detail::mirror_index(j + 1, n)), c + a1(i, j) * i2h);
      trips.emplace_back(r, idx(i, detail::mirror_index(j - 1, n)), c - a1(i, j) * i2h);
      trips.emplace_back(r, r, -4.0 * c);
      b(r) = -f(i, j);
    }
  Eigen::SparseMatrix<double> A(N, N);
  A.setFromTriplets(trips.begin(), trips.end());

  // Bordered normal equations: [A'A  w; w' 0] [u; y] = [A'b; 0]. The operator
  // annihilates constants, so the constraint row pins exactly the null mode
  // and its scale w only affects conditioning, not the solution.
  Eigen::SparseMatrix<double> AtA = (Eigen::SparseMatrix<double>(A.transpose()) * A).pruned();
  const Eigen::VectorXd atb = A.transpose() * b;
  const double w = std::sqrt(AtA.diagonal().mean());

  std::vector<Eigen::Triplet<double>> kt;
  kt.reserve(AtA.nonZeros() + static_cast<size_t>(2) * N);
  for (int k = 0; k < AtA.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(AtA, k); it; ++it)
      kt.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int c = 0; c < N; ++c) {
    kt.emplace_back(N, c, w);
    kt.emplace_back(c, N, w);
  }
  Eigen::SparseMatrix<double> M(N + 1, N + 1);
  M.setFromTriplets(kt.begin(), kt.end());

  Eigen::VectorXd rhs(N + 1);
  rhs.head(N) = atb;
  rhs(N) = 0.0;

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(M);
  require(lu.info() == Eigen::Success, "solve_darcy: sparse factorization failed");
  Eigen::VectorXd z = lu.solve(rhs);
  for (int pass = 0; pass < 2; ++pass) {
    const Eigen::VectorXd r = rhs - M * z;
    z += lu.solve(r);
  }
  const double rel = (M * z - rhs).norm() / std::max(rhs.norm(), 1e-30);
  require(rel <= 1e-8, "solve_darcy: normal-equation residual " + std::to_string(rel) +
                           " exceeds 1e-8, system too ill-conditioned");

  Array2<double> u(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) u(i, j) = z(idx(i, j));
  u -= u.mean();
  return u;
}

inline Array2<double> solve_darcy(const Array2<double>& a, double f = 1.0) {
  return solve_darcy(a, Array2<double>::Constant(a.rows(), a.cols(), f));
}

// Helmholtz source problem: (lap + k^2) u = a, zero Dirichlet walls, then a
// sin(pi x) sin(pi y) mollifier. Poisson is k = 0. Refuses forcing
// frequencies that collide with the discrete Dirichlet spectrum.
inline Array2<double> solve_helmholtz(const Array2<double>& a, double k) {
  detail::check_square_positive(a, "solve_helmholtz");
  const int n = static_cast<int>(a.rows());
  const int m = n - 2;
  const double h = 1.0 / (n - 1);
  const double ih2 = 1.0 / (h * h);
  const double k2 = k * k;

  std::vector<double> lam(m + 1);
  for (int p = 1; p <= m; ++p) {
    const double s = std::sin(0.5 * p * EIGEN_PI * h);
    lam[p] = 4.0 * ih2 * s * s;
  }
  double gap = std::numeric_limits<double>::infinity();
  for (int p = 1; p <= m; ++p)
    for (int q = 1; q <= m; ++q) gap = std::min(gap, std::abs(k2 - lam[p] - lam[q]));
  require(gap > 1e-8 * std::max(1.0, k2),
          "solve_helmholtz: k^2 collides with a discrete Dirichlet eigenvalue");

  const auto idx = [m](int i, int j) { return (i - 1) * m + (j - 1); };
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(5) * m * m);
  Eigen::VectorXd rhs(m * m);
  for (int i = 1; i <= m; ++i)
    for (int j = 1; j <= m; ++j) {
      const int r = idx(i, j);
      trips.emplace_back(r, r, k2 - 4.0 * ih2);
      if (i > 1) trips.emplace_back(r, idx(i - 1, j), ih2);
      if (i < m) trips.emplace_back(r, idx(i + 1, j), ih2);
      if (j > 1) trips.emplace_back(r, idx(i, j - 1), ih2);
      if (j < m) trips.emplace_back(r, idx(i, j + 1), ih2);
      rhs(r) = a(i, j);
    }
  Eigen::SparseMatrix<double> M(m * m, m * m);
  M.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(M);
  require(lu.info() == Eigen::Success, "solve_helmholtz: sparse factorization failed");
  Eigen::VectorXd z = lu.solve(rhs);
  {
    const Eigen::VectorXd r = rhs - M * z;
    z += lu.solve(r);
  }
  const double rel = (M * z - rhs).norm() / std::max(rhs.norm(), 1e-30);
  require(rel <= 1e-8, "solve_helmholtz: linear residual " + std::to_string(rel) +
                           " exceeds 1e-8, system too ill-conditioned");

  Array2<double> u = Array2<double>::Zero(n, n);
  for (int i = 1; i <= m; ++i)
    for (int j = 1; j <= m; ++j) u(i, j) = z(idx(i, j));
  for (int i = 0; i < n; ++i) {
    const double si = std::sin(EIGEN_PI * i * h);
    for (int j = 0; j < n; ++j) u(i, j) *= si * std::sin(EIGEN_PI * j * h);
  }
  return u;
}

namespace detail {

// One classical Lawson (integrating factor) RK4 step for z' = L z + N(z) with
// diagonal L. eh = exp(L dt/2) elementwise, ef = eh^2. NFn computes N.
// cwiseProduct keeps the arithmetic elementwise for Matrix and Array alike.
template <class Z, class NFn>
void lawson_rk4_step(Z& z, const Z& eh, const Z& ef, double dt, const NFn& N) {
  const Z k1 = N(z);
  const Z k2 = N(Z(eh.cwiseProduct(z + (dt / 2) * k1)));
  const Z k3 = N(Z(eh.cwiseProduct(z) + (dt / 2) * k2));
  const Z k4 = N(Z(ef.cwiseProduct(z) + dt * eh.cwiseProduct(k3)));
  z = ef.cwiseProduct(z) +
      (dt / 6) * (ef.cwiseProduct(k1) + 2.0 * eh.cwiseProduct(k2 + k3) + k4);
}

}  // namespace detail

// Viscous Burgers on the periodic unit interval, pseudo-spectral with 2/3
// dealiasing and exact integration of the diffusion term. Returns one row per
// frame; row 0 is the initial condition.
inline Array2<double> solve_burgers(const Vector<double>& u0, int frames, double frame_dt,
                                    double nu = 0.01, int substeps = 8) {
  const int n = static_cast<int>(u0.size());
  require(n >= 8, "solve_burgers: need at least 8 points");
  require(frames >= 2 && frame_dt > 0 && substeps >= 1, "solve_burgers: bad time parameters");
  require(u0.isFinite().all(), "solve_burgers: initial condition contains non-finite values");

  using C = std::complex<double>;
  using CVec = Spectral1<double>::CVec;
  const Spectral1<double> sp(n, 1.0);

  CVec ldiag(n), eh(n), ef(n), dmul(n);
  const double dt = frame_dt / substeps;
  for (int j = 0; j < n; ++j) {
    const double kap = sp.kappa(j);
    const bool keep = std::abs(fft_freq(j, n)) <= n / 3;
    ldiag(j) = C(-nu * kap * kap, 0);
    eh(j) = std::exp(ldiag(j) * (dt / 2));
    ef(j) = eh(j) * eh(j);
    dmul(j) = keep ? C(0, -0.5 * kap) : C(0, 0);  // -(1/2) d/dx, dealiased
  }
  const auto N = [&](const CVec& z) -> CVec {
    const Vector<double> u = sp.ifft_real(z);
    CVec q = sp.fft(Vector<double>(u * u));
    return q.cwiseProduct(dmul);
  };

  Array2<double> out(frames, n);
  out.row(0) = u0.transpose();
  CVec z = sp.fft(u0);
  for (int f = 1; f < frames; ++f) {
    for (int s = 0; s < substeps; ++s) detail::lawson_rk4_step(z, eh, ef, dt, N);
    out.row(f) = sp.ifft_real(z).transpose();
  }
  require(out.isFinite().all(), "solve_burgers: integration diverged");
  return out;
}

// Kolmogorov flow in vorticity form on the 2 pi torus:
//   u_t + v . grad u = (1/Re) lap u - 4 cos(4 xi2) - 0.1 u,  -lap psi = u.
// Pseudo-spectral, 2/3 dealiased convection, diffusion and drag integrated
// exactly. The initial vorticity is demeaned; the mean stays zero. Returns
// one plane per frame at the simulation resolution.
inline std::vector<Array2<double>> solve_kolmogorov(const Array2<double>& u0, int frames,
                                                    double frame_dt, double reynolds = 1000.0,
                                                    int substeps = 4) {
  detail::check_square_positive(u0, "solve_kolmogorov");
  require(frames >= 1 && frame_dt > 0 && substeps >= 1, "solve_kolmogorov: bad time parameters");
  const int n = static_cast<int>(u0.rows());

  using C = std::complex<double>;
  using CArr = Spectral2<double>::CArr;
  const Spectral2<double> sp(n, n, 2.0 * EIGEN_PI, 2.0 * EIGEN_PI);

  CArr eh(n, n), ef(n, n), mask(n, n);
  const double dt = frame_dt / substeps;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double k0 = sp.kappa0(i), k1 = sp.kappa1(j);
      const C l(-(k0 * k0 + k1 * k1) / reynolds - 0.1, 0);
      eh(i, j) = std::exp(l * (dt / 2));
      ef(i, j) = eh(i, j) * eh(i, j);
      const bool keep =
          std::abs(fft_freq(i, n)) <= n / 3 && std::abs(fft_freq(j, n)) <= n / 3;
      mask(i, j) = keep ? C(1, 0) : C(0, 0);
    }

  Array2<double> force(n, n);
  for (int j = 0; j < n; ++j) {
    const double xi2 = 2.0 * EIGEN_PI * j / n;
    force.col(j).setConstant(4.0 * std::cos(4.0 * xi2));
  }
  const CArr fhat = sp.fft2(force);

  const auto N = [&](const CArr& z) -> CArr {
    CArr psi = z;
    sp.mul_inv_neg_laplacian(psi);
    CArr t0 = psi;
    sp.mul_deriv(t0, 1, false);
    const Array2<double> v0 = sp.ifft2_real(t0);
    CArr t1 = psi;
    sp.mul_deriv(t1, 0, false);
    const Array2<double> v1 = -sp.ifft2_real(t1);
    CArr g0 = z;
    sp.mul_deriv(g0, 0, false);
    CArr g1 = z;
    sp.mul_deriv(g1, 1, false);
    const Array2<double> conv =
        v0 * sp.ifft2_real(g0) + v1 * sp.ifft2_real(g1);
    CArr c = sp.fft2(conv);
    c *= mask;
    c(0, 0) = C(0, 0);  // divergence-free transport moves no mean
    return -c - fhat;
  };

  std::vector<Array2<double>> out;
  out.reserve(frames);
  out.push_back(Array2<double>(u0 - u0.mean()));
  CArr z = sp.fft2(out.front());
  z(0, 0) = C(0, 0);
  for (int f = 1; f < frames; ++f) {
    for (int s = 0; s < substeps; ++s) detail::lawson_rk4_step(z, eh, ef, dt, N);
    out.push_back(sp.ifft2_real(z));
    require(out.back().isFinite().all(), "solve_kolmogorov: integration diverged");
  }
  return out;
}

namespace detail {

// Source spectrum indices feeding one output mode of a truncation. The output
// Nyquist slot absorbs both +m/2 and -m/2 source modes so the result of a
// real input stays real.
inline std::vector<int> truncate_sources(int out_idx, int m, int n) {
  const int k = fft_freq(out_idx, m);
  std::vector<int> src{((k % n) + n) % n};
  if (m % 2 == 0 && out_idx == m / 2) {
    const int other = ((-k % n) + n) % n;
    if (other != src[0]) src.push_back(other);
  }
  return src;
}

}  // namespace detail

// Band-limits a periodic plane to an m0 x m1 grid by keeping the lowest
// Fourier modes. Exact on already band-limited input.
inline Array2<double> spectral_truncate(const Array2<double>& u, int m0, int m1) {
  const int n0 = static_cast<int>(u.rows()), n1 = static_cast<int>(u.cols());
  require(m0 >= 2 && m1 >= 2 && m0 <= n0 && m1 <= n1, "spectral_truncate: bad output shape");
  using C = std::complex<double>;
  using CArr = Spectral2<double>::CArr;
  const Spectral2<double> in_sp(n0, n1, 1.0, 1.0);
  CArr z = in_sp.fft2(u);
  z /= C(static_cast<double>(n0) * n1, 0);

  CArr zo(m0, m1);
  const double scale = static_cast<double>(m0) * m1;
  for (int i = 0; i < m0; ++i) {
    const auto si = detail::truncate_sources(i, m0, n0);
    for (int j = 0; j < m1; ++j) {
      const auto sj = detail::truncate_sources(j, m1, n1);
      C acc(0, 0);
      for (int a : si)
        for (int b : sj) acc += z(a, b);
      zo(i, j) = acc * scale;
    }
  }
  const Spectral2<double> out_sp(m0, m1, 1.0, 1.0);
  return out_sp.ifft2_real(zo);
}

}  // namespace pirf
