#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pirf/nn.hpp"

namespace pirf {

// U-Net denoiser with named parameter groups keyed by resolution stage:
// enc.<rows>, bottleneck, dec.<rows>. The group map is the contract that
// layer-wise truncated fine-tuning selects on, so names must stay stable.
//
// widths[s] is the channel width at stage s; stage s runs at plane rows
// rows >> s. The conditioning trunk (noise embedding MLP) lives in the
// bottleneck group; each block adds a per-channel projection of the shared
// embedding, owned by the block's group.
struct DenoiserConfig {
  int data_channels = 2;
  int rows = 32, cols = 32;
  std::vector<int> widths = {16, 24, 32};
  int emb_dim = 16;
  int block_kernel = 3;  // 1 gives the tiny stubs used by derivative oracles
  double sigma_data = 1.0;
  std::uint64_t init_seed = 0;

  int stages() const { return static_cast<int>(widths.size()); }

  void validate() const {
    require(data_channels >= 1, "DenoiserConfig: need at least one data channel");
    require(stages() >= 1, "DenoiserConfig: need at least one stage");
    require(emb_dim >= 2 && emb_dim % 2 == 0, "DenoiserConfig: emb_dim must be even and >= 2");
    require(block_kernel == 1 || block_kernel == 3, "DenoiserConfig: block kernel must be 1 or 3");
    require(sigma_data > 0, "DenoiserConfig: sigma_data must be positive");
    const int down = 1 << (stages() - 1);
    require(rows % down == 0 && cols % down == 0,
            "DenoiserConfig: plane shape must divide by 2^(stages-1)");
    require(rows / down >= 2 && cols / down >= 2, "DenoiserConfig: coarsest stage too small");
    for (int w : widths) require(w >= 1, "DenoiserConfig: widths must be positive");
  }

  std::string enc_group(int s) const { return "enc." + std::to_string(rows >> s); }
  std::string dec_group(int s) const { return "dec." + std::to_string(rows >> s); }
  // the out_conv lives here; layer-wise truncation fine-tunes this group
  std::string highest_res_dec_group() const { return dec_group(0); }

  nlohmann::json to_json() const {
    return {{"data_channels", data_channels}, {"rows", rows},
            {"cols", cols},                   {"widths", widths},
            {"emb_dim", emb_dim},             {"block_kernel", block_kernel},
            {"sigma_data", sigma_data},       {"init_seed", init_seed}};
  }
  static DenoiserConfig from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    c.data_channels = j.at("data_channels").get<int>();
    c.rows = j.at("rows").get<int>();
    c.cols = j.at("cols").get<int>();
    c.widths = j.at("widths").get<std::vector<int>>();
    c.emb_dim = j.at("emb_dim").get<int>();
    c.block_kernel = j.at("block_kernel").get<int>();
    c.sigma_data = j.at("sigma_data").get<double>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    c.validate();
    return c;
  }
};

namespace detail {

// Registration/executation order of the residual-free conv blocks:
// enc 0 .. enc M-2, bottleneck (absent when M = 1), dec M-2 .. dec 0.
struct BlockSpec {
  std::string group;
  int in_ch = 0, out_ch = 0;
};

inline std::vector<BlockSpec> block_layout(const DenoiserConfig& cfg) {
  const int m = cfg.stages();
  std::vector<BlockSpec> bs;
  bs.push_back({cfg.enc_group(0), cfg.widths[0], cfg.widths[0]});
  for (int s = 1; s <= m - 2; ++s) bs.push_back({cfg.enc_group(s), cfg.widths[s - 1], cfg.widths[s]});
  if (m >= 2) bs.push_back({"bottleneck", cfg.widths[m - 2], cfg.widths[m - 1]});
  for (int s = m - 2; s >= 0; --s) {
    const int up_ch = cfg.widths[s + 1];
    bs.push_back({cfg.dec_group(s), up_ch + cfg.widths[s], cfg.widths[s]});
  }
  return bs;
}

}  // namespace detail

template <class S>
struct Denoiser {
  DenoiserConfig cfg;
  ParamStore<S> params;

  static Denoiser make(const DenoiserConfig& cfg) {
    cfg.validate();
    Denoiser den;
    den.cfg = cfg;
    auto& p = den.params;
    Rng rng(cfg.init_seed);

    auto init_normal = [&](Tensor<S>& t, double stdev) {
      for (long i = 0; i < t.size(); ++i) t.value(i) = S(stdev * rng.normal());
    };
    auto add_conv = [&](const std::string& name, const std::string& group, int out, int in,
                        int kernel) {
      const int kk = kernel * kernel;
      p.add(name + ".w", group, kernel == 3 ? std::vector<int>{out, in, 3, 3}
                                            : std::vector<int>{out, in});
      p.add(name + ".b", group, {out});
      init_normal(p.at(name + ".w"), std::sqrt(2.0 / (double(in) * kk)));
    };
    auto add_linear = [&](const std::string& name, const std::string& group, int out, int in) {
      p.add(name + ".w", group, {out, in});
      p.add(name + ".b", group, {out});
      init_normal(p.at(name + ".w"), std::sqrt(2.0 / double(in)));
    };

    add_conv(cfg.enc_group(0) + ".stem", cfg.enc_group(0), cfg.widths[0], cfg.data_channels, 3);
    for (const auto& b : detail::block_layout(cfg)) {
      add_conv(b.group + ".conv_a", b.group, b.out_ch, b.in_ch, cfg.block_kernel);
      add_conv(b.group + ".conv_b", b.group, b.out_ch, b.out_ch, cfg.block_kernel);
      add_linear(b.group + ".emb", b.group, b.out_ch, cfg.emb_dim);
    }
    add_linear("bottleneck.trunk_a", "bottleneck", cfg.emb_dim, cfg.emb_dim);
    add_linear("bottleneck.trunk_b", "bottleneck", cfg.emb_dim, cfg.emb_dim);
    // zero-init output head: the initial denoiser is D(x) = c_skip * x
    add_conv(cfg.dec_group(0) + ".out", cfg.dec_group(0), cfg.data_channels, cfg.widths[0], 1);
    p.at(cfg.dec_group(0) + ".out.w").value.setZero();

    p.init_ema();
    return den;
  }
};

template <class S>
struct BlockTape {
  ConvCache<S> ca, cb;
  RMat<S> pre_a, pre_b;
};

template <class S>
struct DenoiserTape {
  S sigma = 0, c_skip = 0, c_out = 0, c_in = 0;
  Vector<S> feat, t1pre, t1, emb;
  ConvCache<S> stem, out;
  std::vector<BlockTape<S>> blocks;  // execution order per block_layout
};

namespace detail {

// Sinusoidal features of the scalar noise embedding c_noise = ln(sigma)/4;
// frequency ladder geometric from 1 to 256.
template <class S>
Vector<S> sinusoid_features(S c, int dim) {
  Vector<S> f(dim);
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const S w = S(std::pow(256.0, half == 1 ? 0.0 : double(k) / double(half - 1)));
    f(2 * k) = std::sin(c * w);
    f(2 * k + 1) = std::cos(c * w);
  }
  return f;
}

template <class S>
Act<S> block_forward(const ParamStore<S>& p, const std::string& g, const Act<S>& in,
                     const Vector<S>& emb, int kernel, bool use_ema, BlockTape<S>* tape) {
  Act<S> pre_a = conv_forward(p.at(g + ".conv_a.w"), p.at(g + ".conv_a.b"), in, kernel, use_ema,
                              tape ? &tape->ca : nullptr);
  Act<S> ha;
  ha.h = pre_a.h;
  ha.w = pre_a.w;
  ha.m = silu(pre_a.m);
  Act<S> hb = conv_forward(p.at(g + ".conv_b.w"), p.at(g + ".conv_b.b"), ha, kernel, use_ema,
                           tape ? &tape->cb : nullptr);
  const Vector<S> proj = linear_forward(p.at(g + ".emb.w"), p.at(g + ".emb.b"), emb, use_ema);
  for (int c = 0; c < hb.channels(); ++c) hb.m.row(c).array() += proj(c);
  if (tape) {
    tape->pre_a = std::move(pre_a.m);
    tape->pre_b = hb.m;
  }
  hb.m = silu(hb.m);
  return hb;
}

}  // namespace detail

// Copy with the EMA weights promoted to the active values, for evaluating or
// differentiating the averaged model (backward passes read active values).
template <class S>
Denoiser<S> ema_snapshot(const Denoiser<S>& den) {
  Denoiser<S> out = den;
  for (auto& t : out.params.tensors) t.value = t.ema;
  return out;
}

template <class S>
int data_channels(const Denoiser<S>& den) {
  return den.cfg.data_channels;
}

// EDM-preconditioned evaluation: D(x, sigma) = c_skip x + c_out F(c_in x,
// ln(sigma)/4). With sigma_data = 1 the scaled input c_in x equals the VP
// view of the state. Passing a tape records everything denoise_backward
// needs; ema evaluation is forward-only.
template <class S>
Field<S> denoise(const Denoiser<S>& den, const Field<S>& x, S sigma, bool use_ema = false,
                 DenoiserTape<S>* tape = nullptr) {
  const auto& cfg = den.cfg;
  x.validate();
  require(x.channels() == cfg.data_channels && x.grid.plane_rows() == cfg.rows &&
              x.grid.plane_cols() == cfg.cols,
          "denoise: field shape does not match the model");
  require(sigma > 0, "denoise: sigma must be positive");
  require(!(use_ema && tape), "denoise: ema evaluation does not support backprop");
  const auto& p = den.params;

  const S sd = S(cfg.sigma_data);
  const S den2 = sigma * sigma + sd * sd;
  const S c_skip = sd * sd / den2;
  const S c_out = sigma * sd / std::sqrt(den2);
  const S c_in = 1 / std::sqrt(den2);
  const S c_noise = std::log(sigma) / 4;

  Vector<S> feat = detail::sinusoid_features(c_noise, cfg.emb_dim);
  Vector<S> t1pre = linear_forward(p.at("bottleneck.trunk_a.w"), p.at("bottleneck.trunk_a.b"),
                                   feat, use_ema);
  Vector<S> t1 = silu(t1pre);
  Vector<S> emb =
      linear_forward(p.at("bottleneck.trunk_b.w"), p.at("bottleneck.trunk_b.b"), t1, use_ema);

  Act<S> a = act_from_field(x);
  a.m *= c_in;
  Act<S> h = conv_forward(p.at(cfg.enc_group(0) + ".stem.w"), p.at(cfg.enc_group(0) + ".stem.b"),
                          a, 3, use_ema, tape ? &tape->stem : nullptr);

  const auto layout = detail::block_layout(cfg);
  if (tape) {
    tape->sigma = sigma;
    tape->c_skip = c_skip;
    tape->c_out = c_out;
    tape->c_in = c_in;
    tape->feat = feat;
    tape->t1pre = t1pre;
    tape->t1 = t1;
    tape->emb = emb;
    tape->blocks.assign(layout.size(), {});
  }
  const int m = cfg.stages();
  std::vector<Act<S>> skips;
  size_t bi = 0;
  auto run_block = [&](const Act<S>& in) {
    return detail::block_forward(p, layout[bi].group, in, emb, cfg.block_kernel, use_ema,
                                 tape ? &tape->blocks[bi] : nullptr);
  };

  h = run_block(h);
  ++bi;
  skips.push_back(h);
  for (int s = 1; s <= m - 2; ++s) {
    h = avgpool2(h);
    h = run_block(h);
    ++bi;
    skips.push_back(h);
  }
  if (m >= 2) {
    h = avgpool2(h);
    h = run_block(h);
    ++bi;
  }
  for (int s = m - 2; s >= 0; --s) {
    h = upsample2(h);
    h = concat_channels(h, skips[s]);
    h = run_block(h);
    ++bi;
  }
  Act<S> f = conv_forward(p.at(cfg.dec_group(0) + ".out.w"), p.at(cfg.dec_group(0) + ".out.b"),
                          h, 1, use_ema, tape ? &tape->out : nullptr);
  Field<S> d = c_skip * x;
  for (int c = 0; c < cfg.data_channels; ++c)
    d.ch[c] += c_out *
               Eigen::Map<const Array2<S>>(f.m.row(c).data(), cfg.rows, cfg.cols);
  return d;
}

// Reverse pass of denoise(): accumulates parameter gradients (unless
// param_grads is false) and returns the gradient with respect to x.
template <class S>
Field<S> denoise_backward(Denoiser<S>& den, const DenoiserTape<S>& tape, const Field<S>& gd,
                          bool param_grads = true) {
  const auto& cfg = den.cfg;
  auto& p = den.params;
  const auto layout = detail::block_layout(cfg);
  require(tape.blocks.size() == layout.size(), "denoise_backward: tape does not match the model");
  const int m = cfg.stages();

  Act<S> gf = act_from_field(gd);
  gf.m *= tape.c_out;
  Act<S> g = conv_backward(p.at(cfg.dec_group(0) + ".out.w"), p.at(cfg.dec_group(0) + ".out.b"),
                           tape.out, gf, 1, param_grads);

  Vector<S> gemb = Vector<S>::Zero(cfg.emb_dim);
  auto back_block = [&](size_t bi, const Act<S>& gout) {
    const auto& bt = tape.blocks[bi];
    const std::string& gname = layout[bi].group;
    RMat<S> g2 = silu_backward(bt.pre_b, gout.m);
    const Vector<S> gproj = g2.rowwise().sum().array();
    gemb += linear_backward(p.at(gname + ".emb.w"), p.at(gname + ".emb.b"), tape.emb, gproj,
                            param_grads);
    Act<S> g2a;
    g2a.m = std::move(g2);
    g2a.h = gout.h;
    g2a.w = gout.w;
    Act<S> gha = conv_backward(p.at(gname + ".conv_b.w"), p.at(gname + ".conv_b.b"), bt.cb, g2a,
                               cfg.block_kernel, param_grads);
    gha.m = silu_backward(bt.pre_a, gha.m);
    return conv_backward(p.at(gname + ".conv_a.w"), p.at(gname + ".conv_a.b"), bt.ca, gha,
                         cfg.block_kernel, param_grads);
  };

  // dec blocks in reverse execution order, splitting off the skip gradients
  size_t bi = layout.size();
  std::vector<Act<S>> gskips(std::max(m - 1, 0));
  for (int s = 0; s <= m - 2; ++s) {
    g = back_block(--bi, g);
    const int up_ch = cfg.widths[s + 1];
    Act<S> gup;
    gup.h = g.h;
    gup.w = g.w;
    gup.m = g.m.topRows(up_ch);
    Act<S>& gsk = gskips[s];
    gsk.h = g.h;
    gsk.w = g.w;
    gsk.m = g.m.bottomRows(cfg.widths[s]);
    g = upsample2_backward(gup);
  }
  if (m >= 2) {
    g = back_block(--bi, g);
    g = avgpool2_backward(g);
  }
  for (int s = m - 2; s >= 1; --s) {
    g.m += gskips[s].m;
    g = back_block(--bi, g);
    g = avgpool2_backward(g);
  }
  if (m >= 2) g.m += gskips[0].m;
  g = back_block(--bi, g);
  require(bi == 0, "denoise_backward: block walk out of sync");

  Act<S> ga = conv_backward(p.at(cfg.enc_group(0) + ".stem.w"), p.at(cfg.enc_group(0) + ".stem.b"),
                            tape.stem, g, 3, param_grads);

  if (param_grads) {
    Vector<S> gt1 = linear_backward(p.at("bottleneck.trunk_b.w"), p.at("bottleneck.trunk_b.b"),
                                    tape.t1, gemb, true);
    Vector<S> gt1pre = silu_backward(tape.t1pre, gt1);
    linear_backward(p.at("bottleneck.trunk_a.w"), p.at("bottleneck.trunk_a.b"), tape.feat, gt1pre,
                    true);
  }

  Field<S> gx = tape.c_skip * gd;
  for (int c = 0; c < cfg.data_channels; ++c)
    gx.ch[c] += tape.c_in *
                Eigen::Map<const Array2<S>>(ga.m.row(c).data(), cfg.rows, cfg.cols);
  return gx;
}

// ---- checkpoints ------------------------------------------------------------
//
// dir/manifest.json: config, ordered tensor table, trainable map, caller
// extras. dir/params.bin: per tensor, value then ema, little-endian float32.

template <class S>
void save_checkpoint(const Denoiser<S>& den, const std::filesystem::path& dir,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  nlohmann::json man;
  man["format_version"] = 1;
  man["config"] = den.cfg.to_json();
  man["trainable"] = den.params.trainable;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& t : den.params.tensors)
    table.push_back({{"name", t.name}, {"group", t.group}, {"shape", t.shape}});
  man["tensors"] = table;
  for (auto& [k, v] : extra.items()) man[k] = v;
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    require(out.good(), "save_checkpoint: cannot write manifest.json");
    out << man.dump(2) << "\n";
  }
  std::ofstream out(dir / "params.bin", std::ios::binary);
  require(out.good(), "save_checkpoint: cannot write params.bin");
  std::vector<float> buf;
  for (const auto& t : den.params.tensors) {
    buf.resize(2 * t.size());
    for (long i = 0; i < t.size(); ++i) buf[i] = float(t.value(i));
    for (long i = 0; i < t.size(); ++i) buf[t.size() + i] = float(t.ema(i));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  require(out.good(), "save_checkpoint: short write to params.bin");
}

template <class S = float>
Denoiser<S> load_checkpoint(const std::filesystem::path& dir,
                            nlohmann::json* manifest_out = nullptr) {
  std::ifstream metain(dir / "manifest.json");
  require(metain.good(), "load_checkpoint: missing manifest.json in " + dir.string());
  nlohmann::json man = nlohmann::json::parse(metain);
  require(man.at("format_version").get<int>() == 1, "load_checkpoint: unknown format version");
  Denoiser<S> den = Denoiser<S>::make(DenoiserConfig::from_json(man.at("config")));
  const auto& table = man.at("tensors");
  require(table.size() == den.params.tensors.size(),
          "load_checkpoint: tensor table size mismatch");

  std::ifstream in(dir / "params.bin", std::ios::binary);
  require(in.good(), "load_checkpoint: missing params.bin");
  std::vector<float> buf;
  for (size_t i = 0; i < den.params.tensors.size(); ++i) {
    auto& t = den.params.tensors[i];
    require(table[i].at("name").get<std::string>() == t.name &&
                table[i].at("group").get<std::string>() == t.group &&
                table[i].at("shape").get<std::vector<int>>() == t.shape,
            "load_checkpoint: tensor table disagrees with the architecture");
    buf.resize(2 * t.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(buf.size() * sizeof(float)),
            "load_checkpoint: short read from params.bin");
    for (long j = 0; j < t.size(); ++j) t.value(j) = S(buf[j]);
    for (long j = 0; j < t.size(); ++j) t.ema(j) = S(buf[t.size() + j]);
  }
  const auto& tr = man.at("trainable");
  for (auto it = tr.begin(); it != tr.end(); ++it)
    den.params.set_trainable(it.key(), it.value().template get<bool>());
  if (manifest_out) *manifest_out = std::move(man);
  return den;
}

}  // namespace pirf
