#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pirf/common.hpp"

namespace pirf {

enum class Boundary { periodic, wall };

inline const char* to_string(Boundary b) {
  return b == Boundary::periodic ? "periodic" : "wall";
}

// Grid metadata shared by fields, residual operators and solvers.
//
// Plane layout of a field channel:
//   2 spatial dims:          rows = resolution[0] (xi1), cols = resolution[1] (xi2)
//   1 spatial dim + time:    rows = time frames,         cols = resolution[0]
//   1 spatial dim, no time:  rows = 1,                   cols = resolution[0]
struct GridSpec {
  int spatial_dims = 2;
  std::vector<int> resolution;      // per spatial axis
  std::vector<double> domain_length;  // per spatial axis
  Boundary boundary = Boundary::wall;
  bool has_time_axis = false;
  int time_frames = 0;    // only if has_time_axis
  double dt = 0.0;        // seconds, only if has_time_axis

  void validate() const {
    require(spatial_dims == 1 || spatial_dims == 2, "GridSpec: spatial_dims must be 1 or 2");
    require(static_cast<int>(resolution.size()) == spatial_dims,
            "GridSpec: resolution entries must match spatial_dims");
    require(static_cast<int>(domain_length.size()) == spatial_dims,
            "GridSpec: domain_length entries must match spatial_dims");
    for (int r : resolution) require(r >= 8, "GridSpec: resolution must be >= 8 per axis");
    for (double l : domain_length) require(l > 0.0, "GridSpec: domain lengths must be positive");
    if (has_time_axis) {
      require(dt > 0.0, "GridSpec: dt must be positive when a time axis exists");
      require(time_frames >= 2, "GridSpec: a time axis needs at least 2 frames");
    } else {
      require(dt == 0.0, "GridSpec: dt must be absent without a time axis");
    }
  }

  int plane_rows() const {
    if (has_time_axis) return time_frames;
    return spatial_dims == 2 ? resolution[0] : 1;
  }
  int plane_cols() const { return spatial_dims == 2 ? resolution[1] : resolution[0]; }
  long plane_size() const { return static_cast<long>(plane_rows()) * plane_cols(); }

  bool same_shape(const GridSpec& o) const {
    return spatial_dims == o.spatial_dims && resolution == o.resolution &&
           has_time_axis == o.has_time_axis && time_frames == o.time_frames;
  }
};

// Dense multi-channel tensor on a grid. Channels share one plane shape.
template <class S>
struct Field {
  GridSpec grid;
  std::vector<Array2<S>> ch;

  Field() = default;
  Field(GridSpec g, int channels) : grid(std::move(g)) {
    grid.validate();
    ch.assign(channels, Array2<S>::Zero(grid.plane_rows(), grid.plane_cols()));
  }

  int channels() const { return static_cast<int>(ch.size()); }
  long size() const { return channels() * grid.plane_size(); }

  void validate() const {
    grid.validate();
    require(!ch.empty(), "Field: needs at least one channel");
    for (const auto& a : ch)
      require(a.rows() == grid.plane_rows() && a.cols() == grid.plane_cols(),
              "Field: channel shape inconsistent with grid");
  }

  bool all_finite() const {
    for (const auto& a : ch)
      if (!a.isFinite().all()) return false;
    return true;
  }

  Field zeros_like() const { return Field(grid, channels()); }

  template <class T>
  Field<T> cast() const {
    Field<T> out;
    out.grid = grid;
    out.ch.reserve(ch.size());
    for (const auto& a : ch) out.ch.push_back(a.template cast<T>());
    return out;
  }

  // Flat C-order view helpers: index = ((c * rows) + i) * cols + j.
  void to_flat(S* dst) const {
    for (const auto& a : ch) {
      std::copy(a.data(), a.data() + a.size(), dst);
      dst += a.size();
    }
  }
  void from_flat(const S* src) {
    for (auto& a : ch) {
      std::copy(src, src + a.size(), a.data());
      src += a.size();
    }
  }

  S squared_norm() const {
    S acc = 0;
    for (const auto& a : ch) acc += a.square().sum();
    return acc;
  }
  S mean_square() const { return squared_norm() / static_cast<S>(size()); }
};

template <class S>
Field<S> operator+(const Field<S>& a, const Field<S>& b) {
  Field<S> out = a;
  for (int c = 0; c < a.channels(); ++c) out.ch[c] += b.ch[c];
  return out;
}

template <class S>
Field<S> operator-(const Field<S>& a, const Field<S>& b) {
  Field<S> out = a;
  for (int c = 0; c < a.channels(); ++c) out.ch[c] -= b.ch[c];
  return out;
}

template <class S>
Field<S> operator*(S s, const Field<S>& a) {
  Field<S> out = a;
  for (auto& c : out.ch) c *= s;
  return out;
}

}  // namespace pirf
