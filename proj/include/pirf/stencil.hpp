#pragma once

#include "pirf/common.hpp"

namespace pirf {

// Central finite differences on row-major planes with replicate (clamped)
// boundary handling: u[-1] := u[0], u[n] := u[n-1]. Each forward op has an
// exact adjoint built by scattering the same clamped index pattern, so
// <A u, w> == <u, At w> holds to rounding for every grid size.

namespace detail {
inline int clampi(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }
}  // namespace detail

// d/d(axis) with the 3-point central stencil. axis 0 differentiates down
// rows, axis 1 along columns.
template <class S>
Array2<S> deriv1_central(const Array2<S>& u, int axis, S h) {
  const int rows = static_cast<int>(u.rows()), cols = static_cast<int>(u.cols());
  Array2<S> out(rows, cols);
  const S inv = S(1) / (S(2) * h);
  if (axis == 0) {
    for (int i = 0; i < rows; ++i) {
      const int ip = detail::clampi(i + 1, rows), im = detail::clampi(i - 1, rows);
      for (int j = 0; j < cols; ++j) out(i, j) = (u(ip, j) - u(im, j)) * inv;
    }
  } else {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const int jp = detail::clampi(j + 1, cols), jm = detail::clampi(j - 1, cols);
        out(i, j) = (u(i, jp) - u(i, jm)) * inv;
      }
  }
  return out;
}

template <class S>
Array2<S> deriv1_central_adjoint(const Array2<S>& w, int axis, S h) {
  const int rows = static_cast<int>(w.rows()), cols = static_cast<int>(w.cols());
  Array2<S> out = Array2<S>::Zero(rows, cols);
  const S inv = S(1) / (S(2) * h);
  if (axis == 0) {
    for (int i = 0; i < rows; ++i) {
      const int ip = detail::clampi(i + 1, rows), im = detail::clampi(i - 1, rows);
      for (int j = 0; j < cols; ++j) {
        const S v = w(i, j) * inv;
        out(ip, j) += v;
        out(im, j) -= v;
      }
    }
  } else {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const int jp = detail::clampi(j + 1, cols), jm = detail::clampi(j - 1, cols);
        const S v = w(i, j) * inv;
        out(i, jp) += v;
        out(i, jm) -= v;
      }
  }
  return out;
}

// d2/d(axis)2 with the 3-point stencil (u[i+1] - 2 u[i] + u[i-1]) / h^2.
template <class S>
Array2<S> deriv2_central(const Array2<S>& u, int axis, S h) {
  const int rows = static_cast<int>(u.rows()), cols = static_cast<int>(u.cols());
  Array2<S> out(rows, cols);
  const S inv = S(1) / (h * h);
  if (axis == 0) {
    for (int i = 0; i < rows; ++i) {
      const int ip = detail::clampi(i + 1, rows), im = detail::clampi(i - 1, rows);
      for (int j = 0; j < cols; ++j)
        out(i, j) = (u(ip, j) - S(2) * u(i, j) + u(im, j)) * inv;
    }
  } else {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const int jp = detail::clampi(j + 1, cols), jm = detail::clampi(j - 1, cols);
        out(i, j) = (u(i, jp) - S(2) * u(i, j) + u(i, jm)) * inv;
      }
  }
  return out;
}

template <class S>
Array2<S> deriv2_central_adjoint(const Array2<S>& w, int axis, S h) {
  const int rows = static_cast<int>(w.rows()), cols = static_cast<int>(w.cols());
  Array2<S> out = Array2<S>::Zero(rows, cols);
  const S inv = S(1) / (h * h);
  if (axis == 0) {
    for (int i = 0; i < rows; ++i) {
      const int ip = detail::clampi(i + 1, rows), im = detail::clampi(i - 1, rows);
      for (int j = 0; j < cols; ++j) {
        const S v = w(i, j) * inv;
        out(ip, j) += v;
        out(i, j) -= S(2) * v;
        out(im, j) += v;
      }
    }
  } else {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const int jp = detail::clampi(j + 1, cols), jm = detail::clampi(j - 1, cols);
        const S v = w(i, j) * inv;
        out(i, jp) += v;
        out(i, j) -= S(2) * v;
        out(i, jm) += v;
      }
  }
  return out;
}

}  // namespace pirf
