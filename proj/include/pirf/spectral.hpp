#pragma once

#include <complex>

#include <unsupported/Eigen/FFT>

#include "pirf/common.hpp"

namespace pirf {

// Integer DFT frequency of index idx on an n-point axis: 0,1,..,n/2,-n/2+1,..,-1.
inline int fft_freq(int idx, int n) { return idx <= n / 2 ? idx : idx - n; }

// Periodic spectral calculus on a row-major plane. Forward transforms are
// unscaled, inverses carry the 1/N factors, so ifft2(fft2(u)) == u. All
// multiplier ops zero the Nyquist mode of odd derivatives to stay real-valued
// and exactly skew-adjoint.
template <class S>
class Spectral2 {
 public:
  using C = std::complex<S>;
  using CArr = Eigen::Array<C, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CVec = Eigen::Matrix<C, Eigen::Dynamic, 1>;

  Spectral2(int rows, int cols, double len0, double len1)
      : rows_(rows), cols_(cols), len0_(len0), len1_(len1) {
    require(rows >= 2 && cols >= 2, "Spectral2: grid too small");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  // Angular wavenumber along an axis for a given index.
  S kappa0(int i) const { return S(2.0 * EIGEN_PI * fft_freq(i, rows_) / len0_); }
  S kappa1(int j) const { return S(2.0 * EIGEN_PI * fft_freq(j, cols_) / len1_); }

  CArr fft2(const Array2<S>& u) const {
    CArr z(rows_, cols_);
    for (int i = 0; i < rows_; ++i) z.row(i) = u.row(i).template cast<C>();
    transform(z, /*inverse=*/false);
    return z;
  }

  Array2<S> ifft2_real(CArr z) const {
    transform(z, /*inverse=*/true);
    Array2<S> out(rows_, cols_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) out(i, j) = z(i, j).real();
    return out;
  }

  // d/d(axis). Odd multiplier, Nyquist zeroed.
  Array2<S> deriv(const Array2<S>& u, int axis) const {
    CArr z = fft2(u);
    mul_deriv(z, axis, /*conjugate=*/false);
    return ifft2_real(z);
  }

  // Adjoint of deriv over the real inner product (= -deriv on a torus).
  Array2<S> deriv_adjoint(const Array2<S>& w, int axis) const {
    CArr z = fft2(w);
    mul_deriv(z, axis, /*conjugate=*/true);
    return ifft2_real(z);
  }

  Array2<S> laplacian(const Array2<S>& u) const {
    CArr z = fft2(u);
    mul_laplacian(z);
    return ifft2_real(z);
  }

  // Self-adjoint: laplacian is its own adjoint.

  // Solves -lap(psi) = u on the zero-mean subspace; the k=0 mode of the
  // result is zero and the k=0 mode of u is ignored.
  Array2<S> inv_neg_laplacian(const Array2<S>& u) const {
    CArr z = fft2(u);
    mul_inv_neg_laplacian(z);
    return ifft2_real(z);
  }

  // Raw multiplier access for solver code that stays in spectrum space.
  void mul_deriv(CArr& z, int axis, bool conjugate) const {
    const C unit = conjugate ? C(0, -1) : C(0, 1);
    if (axis == 0) {
      for (int i = 0; i < rows_; ++i) {
        const bool nyq = (rows_ % 2 == 0) && (i == rows_ / 2);
        const C f = nyq ? C(0, 0) : unit * kappa0(i);
        z.row(i) *= f;
      }
    } else {
      for (int j = 0; j < cols_; ++j) {
        const bool nyq = (cols_ % 2 == 0) && (j == cols_ / 2);
        const C f = nyq ? C(0, 0) : unit * kappa1(j);
        z.col(j) *= f;
      }
    }
  }

  void mul_laplacian(CArr& z) const {
    for (int i = 0; i < rows_; ++i) {
      const S k0 = kappa0(i);
      for (int j = 0; j < cols_; ++j) {
        const S k1 = kappa1(j);
        z(i, j) *= -(k0 * k0 + k1 * k1);
      }
    }
  }

  void mul_inv_neg_laplacian(CArr& z) const {
    for (int i = 0; i < rows_; ++i) {
      const S k0 = kappa0(i);
      for (int j = 0; j < cols_; ++j) {
        const S k1 = kappa1(j);
        const S k2 = k0 * k0 + k1 * k1;
        z(i, j) = k2 == S(0) ? C(0, 0) : z(i, j) / k2;
      }
    }
  }

  void transform(CArr& z, bool inverse) const {
    CVec tmp_in(cols_), tmp_out(cols_);
    for (int i = 0; i < rows_; ++i) {
      for (int j = 0; j < cols_; ++j) tmp_in(j) = z(i, j);
      run(tmp_out, tmp_in, inverse);
      for (int j = 0; j < cols_; ++j) z(i, j) = tmp_out(j);
    }
    CVec col_in(rows_), col_out(rows_);
    for (int j = 0; j < cols_; ++j) {
      for (int i = 0; i < rows_; ++i) col_in(i) = z(i, j);
      run(col_out, col_in, inverse);
      for (int i = 0; i < rows_; ++i) z(i, j) = col_out(i);
    }
  }

 private:
  void run(CVec& out, const CVec& in, bool inverse) const {
    if (inverse)
      fft_.inv(out, in);
    else
      fft_.fwd(out, in);
  }

  int rows_, cols_;
  double len0_, len1_;
  mutable Eigen::FFT<S> fft_;
};

// One-dimensional helpers for the periodic 1-D solver.
template <class S>
class Spectral1 {
 public:
  using C = std::complex<S>;
  using CVec = Eigen::Matrix<C, Eigen::Dynamic, 1>;

  Spectral1(int n, double len) : n_(n), len_(len) {}

  int size() const { return n_; }
  S kappa(int i) const { return S(2.0 * EIGEN_PI * fft_freq(i, n_) / len_); }

  CVec fft(const Vector<S>& u) const {
    CVec in(n_), out(n_);
    for (int i = 0; i < n_; ++i) in(i) = C(u(i), 0);
    fft_.fwd(out, in);
    return out;
  }

  Vector<S> ifft_real(const CVec& z) const {
    CVec out(n_);
    fft_.inv(out, z);
    Vector<S> u(n_);
    for (int i = 0; i < n_; ++i) u(i) = out(i).real();
    return u;
  }

 private:
  int n_;
  double len_;
  mutable Eigen::FFT<S> fft_;
};

}  // namespace pirf
