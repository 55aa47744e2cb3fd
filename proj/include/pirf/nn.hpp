#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pirf/common.hpp"
#include "pirf/grid.hpp"
#include "pirf/rng.hpp"

namespace pirf {

// Activations are channel-major row-major matrices (channels x h*w) so a
// channel row is one contiguous image plane.
template <class S>
using RMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
struct Act {
  RMat<S> m;
  int h = 0, w = 0;
  int channels() const { return static_cast<int>(m.rows()); }
};

template <class S>
Act<S> act_from_field(const Field<S>& f) {
  Act<S> a;
  a.h = f.grid.plane_rows();
  a.w = f.grid.plane_cols();
  a.m.resize(f.channels(), long(a.h) * a.w);
  for (int c = 0; c < f.channels(); ++c)
    a.m.row(c) = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(f.ch[c].data(), a.m.cols());
  return a;
}

template <class S>
Field<S> field_from_act(const Act<S>& a, const GridSpec& grid) {
  Field<S> f(grid, a.channels());
  require(grid.plane_rows() == a.h && grid.plane_cols() == a.w,
          "field_from_act: plane shape mismatch");
  for (int c = 0; c < a.channels(); ++c)
    Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(f.ch[c].data(), a.m.cols()) = a.m.row(c);
  return f;
}

// Named parameter tensor. value/grad/ema always share the flat length; shape
// is metadata for checkpoints and views.
template <class S>
struct Tensor {
  std::string name, group;
  std::vector<int> shape;
  Vector<S> value, grad, ema;

  long size() const { return value.size(); }
};

template <class S>
struct ParamStore {
  std::vector<Tensor<S>> tensors;
  std::map<std::string, int> index;
  std::map<std::string, bool> trainable;  // per group; groups default to trainable

  int add(const std::string& name, const std::string& group, std::vector<int> shape) {
    require(!index.count(name), "ParamStore: duplicate tensor " + name);
    long n = 1;
    for (int d : shape) {
      require(d >= 1, "ParamStore: bad shape for " + name);
      n *= d;
    }
    Tensor<S> t;
    t.name = name;
    t.group = group;
    t.shape = std::move(shape);
    t.value = Vector<S>::Zero(n);
    t.grad = Vector<S>::Zero(n);
    t.ema = Vector<S>::Zero(n);
    tensors.push_back(std::move(t));
    index[name] = static_cast<int>(tensors.size()) - 1;
    trainable.emplace(group, true);
    return index[name];
  }

  Tensor<S>& at(const std::string& name) {
    auto it = index.find(name);
    require(it != index.end(), "ParamStore: unknown tensor " + name);
    return tensors[it->second];
  }
  const Tensor<S>& at(const std::string& name) const {
    auto it = index.find(name);
    require(it != index.end(), "ParamStore: unknown tensor " + name);
    return tensors[it->second];
  }

  long total_params() const {
    long n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
  void zero_grad() {
    for (auto& t : tensors) t.grad.setZero();
  }
  void init_ema() {
    for (auto& t : tensors) t.ema = t.value;
  }
  bool group_trainable(const std::string& group) const {
    auto it = trainable.find(group);
    require(it != trainable.end(), "ParamStore: unknown group " + group);
    return it->second;
  }
  void set_trainable(const std::string& group, bool on) {
    auto it = trainable.find(group);
    require(it != trainable.end(), "ParamStore: unknown group " + group);
    it->second = on;
  }
  std::vector<std::string> groups() const {
    std::vector<std::string> g;
    for (const auto& [name, on] : trainable) g.push_back(name);
    return g;
  }
};

namespace detail {

template <class S>
Eigen::Map<RMat<S>> mat_view(Tensor<S>& t, long rows, long cols) {
  require(t.size() == rows * cols, "mat_view: shape mismatch for " + t.name);
  return Eigen::Map<RMat<S>>(t.value.data(), rows, cols);
}
template <class S>
Eigen::Map<const RMat<S>> mat_view(const Tensor<S>& t, long rows, long cols,
                                   bool use_ema = false) {
  require(t.size() == rows * cols, "mat_view: shape mismatch for " + t.name);
  return Eigen::Map<const RMat<S>>(use_ema ? t.ema.data() : t.value.data(), rows, cols);
}
template <class S>
Eigen::Map<RMat<S>> grad_view(Tensor<S>& t, long rows, long cols) {
  require(t.size() == rows * cols, "grad_view: shape mismatch for " + t.name);
  return Eigen::Map<RMat<S>>(t.grad.data(), rows, cols);
}

}  // namespace detail

// ---- convolution ----------------------------------------------------------
//
// kernel 3: zero-padded 3x3, weight shape {out, in, 3, 3}
// kernel 1: pointwise,       weight shape {out, in}
// The cache holds the im2col matrix (kernel 3) or the input (kernel 1).

template <class S>
struct ConvCache {
  RMat<S> cols;
  int h = 0, w = 0;
};

namespace detail {

template <class S>
RMat<S> im2col3(const Act<S>& in) {
  const int h = in.h, w = in.w, c = in.channels();
  RMat<S> cols = RMat<S>::Zero(long(c) * 9, long(h) * w);
  for (int ch = 0; ch < c; ++ch)
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) {
        const long r = long(ch) * 9 + (di + 1) * 3 + (dj + 1);
        const int a = std::max(0, -dj), b = std::max(0, dj);
        const int len = w - a - b;
        for (int i = 0; i < h; ++i) {
          const int si = i + di;
          if (si < 0 || si >= h) continue;
          cols.row(r).segment(long(i) * w + a, len) =
              in.m.row(ch).segment(long(si) * w + a + dj, len);
        }
      }
  return cols;
}

template <class S>
void col2im3_add(const RMat<S>& gcols, Act<S>& gin) {
  const int h = gin.h, w = gin.w, c = gin.channels();
  for (int ch = 0; ch < c; ++ch)
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) {
        const long r = long(ch) * 9 + (di + 1) * 3 + (dj + 1);
        const int a = std::max(0, -dj), b = std::max(0, dj);
        const int len = w - a - b;
        for (int i = 0; i < h; ++i) {
          const int si = i + di;
          if (si < 0 || si >= h) continue;
          gin.m.row(ch).segment(long(si) * w + a + dj, len) +=
              gcols.row(r).segment(long(i) * w + a, len);
        }
      }
}

}  // namespace detail

template <class S>
Act<S> conv_forward(const Tensor<S>& wt, const Tensor<S>& bt, const Act<S>& in, int kernel,
                    bool use_ema = false, ConvCache<S>* cache = nullptr) {
  require(kernel == 1 || kernel == 3, "conv: kernel must be 1 or 3");
  const long cin = in.channels();
  const long cout = bt.size();
  const auto w = detail::mat_view(wt, cout, cin * (kernel == 3 ? 9 : 1), use_ema);
  Act<S> out;
  out.h = in.h;
  out.w = in.w;
  if (kernel == 3) {
    RMat<S> cols = detail::im2col3(in);
    out.m.noalias() = w * cols;
    if (cache) cache->cols = std::move(cols);
  } else {
    out.m.noalias() = w * in.m;
    if (cache) cache->cols = in.m;
  }
  const auto& bv = use_ema ? bt.ema : bt.value;
  for (long c = 0; c < cout; ++c) out.m.row(c).array() += bv(c);
  if (cache) {
    cache->h = in.h;
    cache->w = in.w;
  }
  return out;
}

template <class S>
Act<S> conv_backward(Tensor<S>& wt, Tensor<S>& bt, const ConvCache<S>& cache, const Act<S>& gout,
                     int kernel, bool param_grads = true) {
  const long cout = bt.size();
  const long k = kernel == 3 ? 9 : 1;
  const long cin = cache.cols.rows() / k;
  const auto w = detail::mat_view(wt, cout, cin * k);
  if (param_grads) {
    detail::grad_view(wt, cout, cin * k).noalias() += gout.m * cache.cols.transpose();
    Eigen::Map<Vector<S>>(bt.grad.data(), cout) += gout.m.rowwise().sum().array();
  }
  Act<S> gin;
  gin.h = cache.h;
  gin.w = cache.w;
  if (kernel == 3) {
    RMat<S> gcols(cin * 9, cache.cols.cols());
    gcols.noalias() = w.transpose() * gout.m;
    gin.m = RMat<S>::Zero(cin, cache.cols.cols());
    detail::col2im3_add(gcols, gin);
  } else {
    gin.m.noalias() = w.transpose() * gout.m;
  }
  return gin;
}

// ---- dense layer on vectors -----------------------------------------------

template <class S>
Vector<S> linear_forward(const Tensor<S>& wt, const Tensor<S>& bt, const Vector<S>& x,
                         bool use_ema = false) {
  const long out = bt.size(), in = x.size();
  const auto w = detail::mat_view(wt, out, in, use_ema);
  const auto& bv = use_ema ? bt.ema : bt.value;
  return (w * x.matrix()).array() + bv;
}

template <class S>
Vector<S> linear_backward(Tensor<S>& wt, Tensor<S>& bt, const Vector<S>& x, const Vector<S>& gout,
                          bool param_grads = true) {
  const long out = bt.size(), in = x.size();
  const auto w = detail::mat_view(wt, out, in);
  if (param_grads) {
    detail::grad_view(wt, out, in).noalias() += gout.matrix() * x.matrix().transpose();
    bt.grad += gout;
  }
  return (w.transpose() * gout.matrix()).array();
}

// ---- elementwise and shape ops --------------------------------------------

// silu(x) = x * sigmoid(x); backward needs the pre-activation values.
template <class M>
M silu(const M& x) {
  return (x.array() / (1 + (-x.array()).exp())).matrix();
}
template <class M>
M silu_backward(const M& pre, const M& gout) {
  auto s = 1 / (1 + (-pre.array()).exp());
  return (gout.array() * s * (1 + pre.array() * (1 - s))).matrix();
}
template <class S>
Vector<S> silu(const Vector<S>& x) {
  return x / (1 + (-x).exp());
}
template <class S>
Vector<S> silu_backward(const Vector<S>& pre, const Vector<S>& gout) {
  const Vector<S> s = 1 / (1 + (-pre).exp());
  return gout * s * (1 + pre * (1 - s));
}

template <class S>
Act<S> avgpool2(const Act<S>& in) {
  require(in.h % 2 == 0 && in.w % 2 == 0, "avgpool2: odd plane shape");
  Act<S> out;
  out.h = in.h / 2;
  out.w = in.w / 2;
  out.m.resize(in.channels(), long(out.h) * out.w);
  for (int c = 0; c < in.channels(); ++c)
    for (int i = 0; i < out.h; ++i)
      for (int j = 0; j < out.w; ++j)
        out.m(c, long(i) * out.w + j) =
            S(0.25) * (in.m(c, long(2 * i) * in.w + 2 * j) +
                       in.m(c, long(2 * i) * in.w + 2 * j + 1) +
                       in.m(c, long(2 * i + 1) * in.w + 2 * j) +
                       in.m(c, long(2 * i + 1) * in.w + 2 * j + 1));
  return out;
}

template <class S>
Act<S> avgpool2_backward(const Act<S>& gout) {
  Act<S> gin;
  gin.h = gout.h * 2;
  gin.w = gout.w * 2;
  gin.m.resize(gout.channels(), long(gin.h) * gin.w);
  for (int c = 0; c < gout.channels(); ++c)
    for (int i = 0; i < gout.h; ++i)
      for (int j = 0; j < gout.w; ++j) {
        const S g = S(0.25) * gout.m(c, long(i) * gout.w + j);
        gin.m(c, long(2 * i) * gin.w + 2 * j) = g;
        gin.m(c, long(2 * i) * gin.w + 2 * j + 1) = g;
        gin.m(c, long(2 * i + 1) * gin.w + 2 * j) = g;
        gin.m(c, long(2 * i + 1) * gin.w + 2 * j + 1) = g;
      }
  return gin;
}

template <class S>
Act<S> upsample2(const Act<S>& in) {
  Act<S> out;
  out.h = in.h * 2;
  out.w = in.w * 2;
  out.m.resize(in.channels(), long(out.h) * out.w);
  for (int c = 0; c < in.channels(); ++c)
    for (int i = 0; i < out.h; ++i)
      for (int j = 0; j < out.w; ++j)
        out.m(c, long(i) * out.w + j) = in.m(c, long(i / 2) * in.w + j / 2);
  return out;
}

template <class S>
Act<S> upsample2_backward(const Act<S>& gout) {
  require(gout.h % 2 == 0 && gout.w % 2 == 0, "upsample2_backward: odd plane shape");
  Act<S> gin;
  gin.h = gout.h / 2;
  gin.w = gout.w / 2;
  gin.m = RMat<S>::Zero(gout.channels(), long(gin.h) * gin.w);
  for (int c = 0; c < gout.channels(); ++c)
    for (int i = 0; i < gout.h; ++i)
      for (int j = 0; j < gout.w; ++j)
        gin.m(c, long(i / 2) * gin.w + j / 2) += gout.m(c, long(i) * gout.w + j);
  return gin;
}

template <class S>
Act<S> concat_channels(const Act<S>& a, const Act<S>& b) {
  require(a.h == b.h && a.w == b.w, "concat_channels: plane shape mismatch");
  Act<S> out;
  out.h = a.h;
  out.w = a.w;
  out.m.resize(a.channels() + b.channels(), a.m.cols());
  out.m.topRows(a.channels()) = a.m;
  out.m.bottomRows(b.channels()) = b.m;
  return out;
}

// ---- optimizer and averaging ----------------------------------------------

template <class S>
struct AdamState {
  std::vector<Vector<S>> m, v;
  long t = 0;

  void ensure(const ParamStore<S>& p) {
    if (!m.empty()) return;
    for (const auto& tn : p.tensors) {
      m.push_back(Vector<S>::Zero(tn.size()));
      v.push_back(Vector<S>::Zero(tn.size()));
    }
  }
};

// One Adam step over all trainable groups. Frozen groups are skipped
// entirely: parameters, ema and moments stay bit-identical.
template <class S>
void adam_step(ParamStore<S>& params, AdamState<S>& st, S lr, S beta1 = S(0.9),
               S beta2 = S(0.999), S eps = S(1e-8)) {
  st.ensure(params);
  st.t += 1;
  const S c1 = 1 - std::pow(beta1, S(st.t));
  const S c2 = 1 - std::pow(beta2, S(st.t));
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    auto& t = params.tensors[i];
    if (!params.group_trainable(t.group)) continue;
    st.m[i] = beta1 * st.m[i] + (1 - beta1) * t.grad;
    st.v[i] = beta2 * st.v[i] + (1 - beta2) * t.grad.square();
    t.value -= lr * (st.m[i] / c1) / ((st.v[i] / c2).sqrt() + eps);
  }
}

template <class S>
void ema_update(ParamStore<S>& params, double beta) {
  for (auto& t : params.tensors) {
    if (!params.group_trainable(t.group)) continue;
    t.ema = S(beta) * t.ema + S(1.0 - beta) * t.value;
  }
}

inline double ema_beta(double half_life) { return std::pow(0.5, 1.0 / half_life); }

}  // namespace pirf
