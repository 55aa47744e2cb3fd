#pragma once

#include <cmath>
#include <string>

#include "pirf/grid.hpp"
#include "pirf/spectral.hpp"
#include "pirf/stencil.hpp"

namespace pirf {

enum class Pde { burgers, darcy, helmholtz, poisson, kolmogorov };

inline const char* to_string(Pde p) {
  switch (p) {
    case Pde::burgers: return "burgers";
    case Pde::darcy: return "darcy";
    case Pde::helmholtz: return "helmholtz";
    case Pde::poisson: return "poisson";
    case Pde::kolmogorov: return "kolmogorov";
  }
  return "?";
}

inline Pde pde_from_string(const std::string& s) {
  if (s == "burgers") return Pde::burgers;
  if (s == "darcy") return Pde::darcy;
  if (s == "helmholtz") return Pde::helmholtz;
  if (s == "poisson") return Pde::poisson;
  if (s == "kolmogorov") return Pde::kolmogorov;
  fail("unknown pde: " + s);
}

// Pointwise PDE residual of a candidate solution field. Partial derivatives
// inside a sample are discrete: central differences with replicate padding
// for the wall-boundary problems (second derivatives for Burgers are the
// first-derivative stencil applied twice), spectral derivatives for the
// periodic vorticity problem. Channel conventions:
//   burgers:     1 channel, rows = time frames, cols = space
//   darcy:       2 channels [a, u]
//   helmholtz:   2 channels [a, u]   (poisson is the k = 0 special case)
//   kolmogorov:  3 channels [u(t-dt), u(t), u(t+dt)]
struct ResidualOperator {
  Pde pde = Pde::darcy;
  double nu = 0.01;        // burgers viscosity
  double forcing = 1.0;    // darcy source term f
  double k = 1.0;          // helmholtz wavenumber
  double reynolds = 1000;  // kolmogorov Reynolds number
  double dt = 1.0 / 32.0;  // kolmogorov frame spacing in seconds

  static ResidualOperator make(Pde p) {
    ResidualOperator op;
    op.pde = p;
    if (p == Pde::poisson) op.k = 0.0;
    return op;
  }

  int expected_channels() const {
    switch (pde) {
      case Pde::burgers: return 1;
      case Pde::darcy:
      case Pde::helmholtz:
      case Pde::poisson: return 2;
      case Pde::kolmogorov: return 3;
    }
    return 0;
  }
};

namespace detail {

template <class S>
void check_residual_input(const ResidualOperator& op, const Field<S>& f) {
  f.validate();
  require(f.channels() == op.expected_channels(),
          std::string("residual: field has wrong channel count for ") + to_string(op.pde));
  require(f.all_finite(), "residual: field contains non-finite values");
  if (op.pde == Pde::burgers)
    require(f.grid.has_time_axis && f.grid.spatial_dims == 1,
            "residual: burgers expects a 1-D field with a time axis");
  if (op.pde == Pde::kolmogorov) {
    require(f.grid.spatial_dims == 2, "residual: kolmogorov expects a 2-D field");
    require(op.dt > 0, "residual: kolmogorov needs a positive frame spacing");
  }
}

// Grid spacing conventions: wall-boundary problems sample the closed interval
// (spacing L/(n-1)), periodic problems the half-open one (spacing L/n).
template <class S>
S wall_spacing(const GridSpec& g, int axis) {
  return S(g.domain_length[axis] / (g.resolution[axis] - 1));
}
template <class S>
S periodic_spacing(const GridSpec& g, int axis) {
  return S(g.domain_length[axis] / g.resolution[axis]);
}

template <class S>
Array2<S> burgers_plane(const ResidualOperator& op, const GridSpec& g, const Array2<S>& u) {
  const S dx = periodic_spacing<S>(g, 0);
  const S dt = S(g.dt);
  const Array2<S> ux = deriv1_central(u, 1, dx);
  const Array2<S> uxx = deriv1_central(ux, 1, dx);
  const Array2<S> ut = deriv1_central(u, 0, dt);
  return ut + u * ux - S(op.nu) * uxx;
}

template <class S>
void burgers_vjp(const ResidualOperator& op, const GridSpec& g, const Array2<S>& u,
                 const Array2<S>& w, Array2<S>& gu) {
  const S dx = periodic_spacing<S>(g, 0);
  const S dt = S(g.dt);
  const Array2<S> ux = deriv1_central(u, 1, dx);
  gu = deriv1_central_adjoint(w, 0, dt);
  gu += ux * w;
  gu += deriv1_central_adjoint(Array2<S>(u * w), 1, dx);
  Array2<S> inner = deriv1_central_adjoint(w, 1, dx);
  gu -= S(op.nu) * deriv1_central_adjoint(inner, 1, dx);
}

template <class S>
Array2<S> darcy_plane(const ResidualOperator& op, const GridSpec& g, const Array2<S>& a,
                      const Array2<S>& u_raw) {
  const S h0 = wall_spacing<S>(g, 0), h1 = wall_spacing<S>(g, 1);
  const Array2<S> u = u_raw - u_raw.mean();
  return a * deriv2_central(u, 0, h0) + deriv1_central(a, 0, h0) * deriv1_central(u, 0, h0) +
         a * deriv2_central(u, 1, h1) + deriv1_central(a, 1, h1) * deriv1_central(u, 1, h1) +
         S(op.forcing);
}

template <class S>
void darcy_vjp(const ResidualOperator&, const GridSpec& g, const Array2<S>& a,
               const Array2<S>& u_raw, const Array2<S>& w, Array2<S>& ga, Array2<S>& gu) {
  const S h0 = wall_spacing<S>(g, 0), h1 = wall_spacing<S>(g, 1);
  const Array2<S> u = u_raw - u_raw.mean();
  const Array2<S> u00 = deriv2_central(u, 0, h0), u11 = deriv2_central(u, 1, h1);
  const Array2<S> u0 = deriv1_central(u, 0, h0), u1 = deriv1_central(u, 1, h1);
  const Array2<S> a0 = deriv1_central(a, 0, h0), a1 = deriv1_central(a, 1, h1);

  ga = (u00 + u11) * w;
  ga += deriv1_central_adjoint(Array2<S>(u0 * w), 0, h0);
  ga += deriv1_central_adjoint(Array2<S>(u1 * w), 1, h1);

  gu = deriv2_central_adjoint(Array2<S>(a * w), 0, h0);
  gu += deriv2_central_adjoint(Array2<S>(a * w), 1, h1);
  gu += deriv1_central_adjoint(Array2<S>(a0 * w), 0, h0);
  gu += deriv1_central_adjoint(Array2<S>(a1 * w), 1, h1);
  gu -= gu.mean();  // adjoint of the mean normalization
}

template <class S>
Array2<S> helmholtz_plane(const ResidualOperator& op, const GridSpec& g, const Array2<S>& a,
                          const Array2<S>& u) {
  const S h0 = wall_spacing<S>(g, 0), h1 = wall_spacing<S>(g, 1);
  const S k2 = S(op.k * op.k);
  return deriv2_central(u, 0, h0) + deriv2_central(u, 1, h1) + k2 * u - a;
}

template <class S>
void helmholtz_vjp(const ResidualOperator& op, const GridSpec& g, const Array2<S>& w,
                   Array2<S>& ga, Array2<S>& gu) {
  const S h0 = wall_spacing<S>(g, 0), h1 = wall_spacing<S>(g, 1);
  const S k2 = S(op.k * op.k);
  ga = -w;
  gu = deriv2_central_adjoint(w, 0, h0) + deriv2_central_adjoint(w, 1, h1) + k2 * w;
}

// Vorticity-form Navier-Stokes with fixed forcing -4 cos(4 xi2) and linear
// drag -0.1 u. Velocity comes from the stream function: -lap(psi) = u; the
// k = 0 vorticity mode carries no velocity on the torus and drops out.
template <class S>
Array2<S> kolmogorov_plane(const ResidualOperator& op, const GridSpec& g, const Array2<S>& um,
                           const Array2<S>& uc, const Array2<S>& up) {
  const Spectral2<S> sp(g.resolution[0], g.resolution[1], g.domain_length[0], g.domain_length[1]);
  const Array2<S> psi = sp.inv_neg_laplacian(uc);
  const Array2<S> v0 = sp.deriv(psi, 1);   // velocity along xi1
  const Array2<S> v1 = -sp.deriv(psi, 0);  // velocity along xi2
  const Array2<S> conv = v0 * sp.deriv(uc, 0) + v1 * sp.deriv(uc, 1);
  const S inv_re = S(1.0 / op.reynolds);
  const S inv_2dt = S(1) / (S(2) * S(op.dt));

  Array2<S> r = (up - um) * inv_2dt + conv - inv_re * sp.laplacian(uc) + S(0.1) * uc;
  const int cols = g.resolution[1];
  for (int j = 0; j < cols; ++j) {
    const S xi2 = S(g.domain_length[1]) * S(j) / S(cols);
    r.col(j) += S(4) * std::cos(S(4) * xi2);
  }
  return r;
}

template <class S>
void kolmogorov_vjp(const ResidualOperator& op, const GridSpec& g, const Array2<S>& uc,
                    const Array2<S>& w, Array2<S>& gm, Array2<S>& gc, Array2<S>& gp) {
  const Spectral2<S> sp(g.resolution[0], g.resolution[1], g.domain_length[0], g.domain_length[1]);
  const S inv_re = S(1.0 / op.reynolds);
  const S inv_2dt = S(1) / (S(2) * S(op.dt));

  gp = w * inv_2dt;
  gm = -w * inv_2dt;

  const Array2<S> psi = sp.inv_neg_laplacian(uc);
  const Array2<S> v0 = sp.deriv(psi, 1);
  const Array2<S> v1 = -sp.deriv(psi, 0);
  const Array2<S> u0 = sp.deriv(uc, 0);
  const Array2<S> u1 = sp.deriv(uc, 1);

  // through grad(u): adjoint of delta -> v . grad(delta)
  gc = -sp.deriv(Array2<S>(v0 * w), 0) - sp.deriv(Array2<S>(v1 * w), 1);
  // through v(delta): velocities are derivatives of the stream function
  gc += sp.inv_neg_laplacian(
      Array2<S>(sp.deriv(Array2<S>(w * u1), 0) - sp.deriv(Array2<S>(w * u0), 1)));
  gc -= inv_re * sp.laplacian(w);
  gc += S(0.1) * w;
}

}  // namespace detail

// Pointwise residual; one plane, same grid as the input.
template <class S>
Field<S> residual(const ResidualOperator& op, const Field<S>& f) {
  detail::check_residual_input(op, f);
  Field<S> r(f.grid, 1);
  switch (op.pde) {
    case Pde::burgers:
      r.ch[0] = detail::burgers_plane(op, f.grid, f.ch[0]);
      break;
    case Pde::darcy:
      r.ch[0] = detail::darcy_plane(op, f.grid, f.ch[0], f.ch[1]);
      break;
    case Pde::helmholtz:
    case Pde::poisson:
      r.ch[0] = detail::helmholtz_plane(op, f.grid, f.ch[0], f.ch[1]);
      break;
    case Pde::kolmogorov:
      r.ch[0] = detail::kolmogorov_plane(op, f.grid, f.ch[0], f.ch[1], f.ch[2]);
      break;
  }
  return r;
}

// Vector-Jacobian product: gradient of <w, R(f)> with respect to f.
template <class S>
Field<S> residual_vjp(const ResidualOperator& op, const Field<S>& f, const Array2<S>& w) {
  detail::check_residual_input(op, f);
  Field<S> g = f.zeros_like();
  switch (op.pde) {
    case Pde::burgers:
      detail::burgers_vjp(op, f.grid, f.ch[0], w, g.ch[0]);
      break;
    case Pde::darcy:
      detail::darcy_vjp(op, f.grid, f.ch[0], f.ch[1], w, g.ch[0], g.ch[1]);
      break;
    case Pde::helmholtz:
    case Pde::poisson:
      detail::helmholtz_vjp(op, f.grid, w, g.ch[0], g.ch[1]);
      break;
    case Pde::kolmogorov:
      detail::kolmogorov_vjp(op, f.grid, f.ch[1], w, g.ch[0], g.ch[1], g.ch[2]);
      break;
  }
  return g;
}

// Mean squared pointwise residual of one sample.
template <class S>
S residual_mean_square(const ResidualOperator& op, const Field<S>& f) {
  return residual(op, f).mean_square();
}

// Reward: negative mean squared residual. Mean, not sum, so the value is
// comparable across resolutions.
template <class S>
S reward(const ResidualOperator& op, const Field<S>& f) {
  return -residual_mean_square(op, f);
}

// Exact gradient of reward() with respect to every field value.
template <class S>
Field<S> reward_gradient(const ResidualOperator& op, const Field<S>& f) {
  const Field<S> r = residual(op, f);
  const S scale = S(-2) / S(r.size());
  return residual_vjp(op, f, Array2<S>(scale * r.ch[0]));
}

}  // namespace pirf
