#pragma once

// Reward fine-tuning of a denoiser by backpropagating the terminal physics
// reward through a deterministic sampling trajectory. Truncation keeps memory
// and compute bounded: only the last K transitions record activations, the
// prefix runs in inference mode and its output enters the recorded suffix as
// a constant. Layer groups outside the configured set are frozen bit-exactly.
//
// The model concept is the same seam the samplers use: denoise /
// denoise_backward / data_channels found by ADL, plus a .params ParamStore.
// Everything here is single-stream; gradient accumulation order is fixed by
// the trajectory index, so identical (weights, config, seed) reproduce the
// fine-tuned parameters bit for bit.

#include <pirf/baselines.hpp>
#include <pirf/diffusion.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace pirf {

enum class Regularizer { none, online_weight, distill, offline_ema, early_stop };

inline std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::none: return "none";
    case Regularizer::online_weight: return "online_weight";
    case Regularizer::distill: return "distill";
    case Regularizer::offline_ema: return "offline_ema";
    case Regularizer::early_stop: return "early_stop";
  }
  fail("to_string: bad regularizer");
}

inline Regularizer regularizer_from_string(const std::string& s) {
  if (s == "none") return Regularizer::none;
  if (s == "online_weight") return Regularizer::online_weight;
  if (s == "distill") return Regularizer::distill;
  if (s == "offline_ema") return Regularizer::offline_ema;
  if (s == "early_stop") return Regularizer::early_stop;
  fail("regularizer_from_string: unknown name " + s);
}

// Exactly one regularizer is active per run; the scalar knobs below it apply
// only when their variant is selected.
struct FinetuneConfig {
  int steps = 20;          // sampling steps T per trajectory
  int truncate_last = 2;   // K: transitions with recorded activations
  std::vector<std::string> layer_groups;  // allowed to update; empty = all

  Regularizer reg = Regularizer::offline_ema;
  double lambda_weight = 1e-3;   // online_weight penalty weight
  double lambda_distill = 1e-3;  // distill penalty weight
  double ema_half_life = 500;    // offline_ema: updates until old weights halve
  int early_stop_patience = 5;   // early_stop: evals without improvement
  long max_updates = 0;          // early_stop: hard cap, 0 = none

  int batch = 8;              // trajectories per update
  double lr = 1e-4;
  long trajectories = 30000;  // total rollout budget
  double clip_norm = 0;       // global gradient clip, 0 = off
  std::uint64_t seed = 0;

  int eval_every = 0;    // held-out eval cadence in updates, 0 = final only
  int eval_samples = 8;  // rollouts per held-out eval

  void validate() const {
    require(steps >= 1, "FinetuneConfig: steps must be positive");
    require(truncate_last >= 1 && truncate_last <= steps,
            "FinetuneConfig: truncate_last must lie in [1, steps]");
    require(batch >= 1 && trajectories >= 1, "FinetuneConfig: empty trajectory budget");
    require(lr >= 0, "FinetuneConfig: negative learning rate");
    require(lambda_weight >= 0 && lambda_distill >= 0, "FinetuneConfig: negative penalty weight");
    require(ema_half_life > 0, "FinetuneConfig: ema_half_life must be positive");
    require(early_stop_patience >= 1, "FinetuneConfig: early_stop_patience must be positive");
    require(eval_every >= 0 && eval_samples >= 1, "FinetuneConfig: bad eval settings");
    require(reg != Regularizer::early_stop || eval_every > 0,
            "FinetuneConfig: early_stop needs eval_every > 0");
  }

  nlohmann::json to_json() const {
    return {{"steps", steps},
            {"truncate_last", truncate_last},
            {"layer_groups", layer_groups},
            {"regularizer", to_string(reg)},
            {"lambda_weight", lambda_weight},
            {"lambda_distill", lambda_distill},
            {"ema_half_life", ema_half_life},
            {"early_stop_patience", early_stop_patience},
            {"max_updates", max_updates},
            {"batch", batch},
            {"lr", lr},
            {"trajectories", trajectories},
            {"clip_norm", clip_norm},
            {"seed", seed},
            {"eval_every", eval_every},
            {"eval_samples", eval_samples}};
  }
};

struct FinetuneReport {
  std::vector<double> reward_mean, reward_std;  // one entry per applied update
  std::vector<double> weight_drift;             // ||theta - theta_base|| per update
  std::vector<double> heldout_mse;              // residual MSE at eval points
  std::vector<long> heldout_at;                 // update index of each eval
  double base_reward = 0;                       // mean reward before any update
  double seconds_per_1k = 0;                    // wall clock per 1k trajectories
  long updates = 0, trajectories = 0, skipped = 0;
  std::string regularizer;
};

namespace detail {

// Deterministic rollout without derivative recording, shared by stubs and the
// real denoiser (the Denoiser-only samplers in diffusion.hpp are not generic).
template <class S, class Den>
Field<S> ddim_final(Den& den, const NoiseSchedule& sched, std::uint64_t seed,
                    const GridSpec& grid, bool use_ema = false) {
  Field<S> x = initial_state<S>(grid, data_channels(den), sched.sigma[0], seed);
  for (int i = 0; i < sched.steps; ++i) {
    const Field<S> d =
        denoise(den, x, S(sched.sigma[i]), use_ema, static_cast<DenoiserTape<S>*>(nullptr));
    x = ddim_update(x, d, sched.sigma[i], sched.sigma[i + 1]);
  }
  return x;
}

template <class S>
double mean_square_diff(const Field<S>& a, const Field<S>& b) {
  double acc = 0;
  for (int c = 0; c < a.channels(); ++c)
    acc += double((a.ch[c] - b.ch[c]).template cast<double>().square().sum());
  return acc / double(a.size());
}

}  // namespace detail

// One fine-tuning trajectory: deterministic DDIM rollout, terminal reward on
// the denormalized final state, and the truncated reward gradient accumulated
// into den.params grads in the descent convention (the objective is
// -reward [+ distillation penalty], so a descent optimizer ascends the
// reward). grad_weight scales this trajectory's contribution, letting the
// caller average a batch by passing 1/m.
//
// Truncation: transitions 0..T-K-1 run without tapes and their output state
// is treated as a constant; the last K transitions record activations (at
// most K tapes are ever alive). Gradients land only on trainable groups; the
// rest are zeroed so the returned direction is the restricted gradient.
//
// Distillation (base != nullptr and lambda_distill > 0) adds
//   lambda * sum_t mean ||D(x_t, s_t) - D_base(x_t, s_t)||^2
// over all T transitions, which costs one extra base forward per step and a
// taped forward on the prefix (consumed immediately, so the memory bound
// stays K + 1 tapes). The base estimates enter the gradient as constants,
// exactly as if the base model ran without derivative recording; prefix
// terms contribute their direct parameter gradient, and their dependence
// through x_t is truncated like the reward's.
template <class S, class Den, class RW>
double rollout_with_grad(Den& den, const NoiseSchedule& sched, int truncate_last, const RW& rw,
                         std::uint64_t seed, const GridSpec& grid, double grad_weight = 1.0,
                         Field<S>* x0_out = nullptr, Den* base = nullptr,
                         double lambda_distill = 0, double* penalty_out = nullptr) {
  const int T = sched.steps;
  const int K = truncate_last;
  require(K >= 1 && K <= T, "rollout_with_grad: truncate_last must lie in [1, steps]");
  const bool distill = base != nullptr && lambda_distill > 0;

  Field<S> x = initial_state<S>(grid, data_channels(den), sched.sigma[0], seed);
  const double inv_n = 1.0 / double(x.size());
  double penalty = 0;

  struct Recorded {
    DenoiserTape<S> tape;
    S coef;
    Field<S> pen_seed;  // lambda * (2/n) (D - D_base), empty unless distill
  };
  std::vector<Recorded> suffix;
  suffix.reserve(size_t(K));

  for (int i = 0; i < T; ++i) {
    const S sc = S(sched.sigma[i]);
    const bool recorded = i >= T - K;
    Field<S> d;
    Field<S> pen_seed;
    if (recorded || distill) {
      DenoiserTape<S> tape;
      d = denoise(den, x, sc, false, &tape);
      if (distill) {
        const Field<S> db =
            denoise(*base, x, sc, false, static_cast<DenoiserTape<S>*>(nullptr));
        penalty += lambda_distill * detail::mean_square_diff(d, db);
        pen_seed = d.zeros_like();
        for (int c = 0; c < d.channels(); ++c)
          pen_seed.ch[c] = S(grad_weight * lambda_distill * 2.0 * inv_n) * (d.ch[c] - db.ch[c]);
      }
      if (recorded) {
        suffix.push_back({std::move(tape), S(ddim_coef(sched.sigma[i], sched.sigma[i + 1])),
                          std::move(pen_seed)});
      } else {
        // prefix distillation term: direct parameter gradient only, the tape
        // dies here so no activation outlives its step
        denoise_backward(den, tape, pen_seed);
      }
    } else {
      d = denoise(den, x, sc, false, static_cast<DenoiserTape<S>*>(nullptr));
    }
    const S coef = recorded ? suffix.back().coef
                            : S(ddim_coef(sched.sigma[i], sched.sigma[i + 1]));
    for (int c = 0; c < x.channels(); ++c) x.ch[c] = d.ch[c] + coef * (x.ch[c] - d.ch[c]);
  }

  Field<S> gr;
  const double reward = rw.reward_gradient(x, gr);
  require(std::isfinite(reward), "rollout_with_grad: non-finite reward (seed " +
                                     std::to_string(seed) + ")");
  if (x0_out) *x0_out = x;

  // descent objective -r: seed with -grad_weight * dr/dx0, then walk the
  // affine transitions backwards: x_next = d + c (x - d) gives
  // dx_next/dd = (1 - c) I and dx_next/dx = c I + (1 - c) dD/dx.
  Field<S> gx = gr.zeros_like();
  for (int c = 0; c < gx.channels(); ++c) gx.ch[c] = S(-grad_weight) * gr.ch[c];
  for (int j = K - 1; j >= 0; --j) {
    auto& rec = suffix[size_t(j)];
    Field<S> gd = gx.zeros_like();
    for (int c = 0; c < gd.channels(); ++c) {
      gd.ch[c] = (S(1) - rec.coef) * gx.ch[c];
      if (rec.pen_seed.channels() > 0) gd.ch[c] += rec.pen_seed.ch[c];
    }
    const Field<S> gvia = denoise_backward(den, rec.tape, gd);
    for (int c = 0; c < gx.channels(); ++c) gx.ch[c] = rec.coef * gx.ch[c] + gvia.ch[c];
    require(gx.all_finite(), "rollout_with_grad: non-finite state gradient at step " +
                                 std::to_string(T - K + j));
  }

  // the restricted gradient: frozen groups contribute nothing
  for (auto& t : den.params.tensors)
    if (!den.params.group_trainable(t.group)) t.grad.setZero();

  if (penalty_out) *penalty_out = penalty;
  return reward;
}

// Value of the distillation penalty along given trajectory states, without
// gradients. states[i] is the input of transition i at level sched.sigma[i].
template <class S, class Den>
double distill_penalty(Den& den, Den& base, const std::vector<Field<S>>& states,
                       const NoiseSchedule& sched, double lambda) {
  require(int(states.size()) >= sched.steps, "distill_penalty: too few states");
  double pen = 0;
  for (int i = 0; i < sched.steps; ++i) {
    const S sc = S(sched.sigma[i]);
    const Field<S> d =
        denoise(den, states[size_t(i)], sc, false, static_cast<DenoiserTape<S>*>(nullptr));
    const Field<S> db =
        denoise(base, states[size_t(i)], sc, false, static_cast<DenoiserTape<S>*>(nullptr));
    pen += lambda * detail::mean_square_diff(d, db);
  }
  return pen;
}

// Weight-space regularizer: the descent gradient of lambda ||theta -
// theta_base||^2, i.e. +2 lambda (theta - theta_base), added on trainable
// groups only. Equivalently it subtracts 2 lambda (theta - theta_base) from
// the reward-ascent direction.
template <class S>
void apply_online_weight_reg(ParamStore<S>& params, const ParamStore<S>& base, double lambda) {
  require(params.tensors.size() == base.tensors.size(),
          "apply_online_weight_reg: parameter sets differ");
  if (lambda == 0) return;
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    auto& t = params.tensors[i];
    const auto& b = base.tensors[i];
    require(t.size() == b.size(), "apply_online_weight_reg: tensor " + t.name + " differs");
    if (!params.group_trainable(t.group)) continue;
    t.grad += S(2.0 * lambda) * (t.value - b.value);
  }
}

// (1 - w) base + w fine-tuned, elementwise. The result is an evaluation
// model: its averaged weights are set equal to its active ones.
template <class S>
Denoiser<S> interpolate_weights(const Denoiser<S>& base, const Denoiser<S>& ft, double w) {
  require(w >= 0 && w <= 1, "interpolate_weights: w must lie in [0, 1]");
  require(base.params.tensors.size() == ft.params.tensors.size(),
          "interpolate_weights: architectures differ");
  Denoiser<S> out = base;
  for (size_t i = 0; i < out.params.tensors.size(); ++i) {
    auto& t = out.params.tensors[i];
    const auto& f = ft.params.tensors[i];
    require(t.name == f.name && t.size() == f.size(),
            "interpolate_weights: architectures differ at " + t.name);
    t.value = S(1.0 - w) * t.value + S(w) * f.value;
    t.ema = t.value;
  }
  return out;
}

namespace detail {
struct NoFinetuneHook {
  template <class Den>
  void operator()(long, const Den&, const FinetuneReport&) const {}
};
}  // namespace detail

// Gradient ascent on the mean trajectory reward with the configured
// regularizer. den enters as the base model and leaves fine-tuned; the hook
// (if any) observes (update index, model, report so far) after every applied
// update. Held-out residual MSE is -mean reward over eval rollouts, measured
// on the averaged weights when offline_ema is active and on the active
// weights otherwise; the same choice applies to the model handed back
// (non-EMA runs leave with averaged weights synced to the active ones on
// trainable groups, so a saved checkpoint evaluates identically either way).
template <class S, class Den, class RW, class Hook = detail::NoFinetuneHook>
FinetuneReport finetune(Den& den, const RW& rw, const GridSpec& grid, const FinetuneConfig& cfg,
                        Hook&& hook = Hook{}) {
  cfg.validate();
  const NoiseSchedule sched = NoiseSchedule::edm(cfg.steps);
  if (!cfg.layer_groups.empty()) {
    for (const auto& g : den.params.groups()) den.params.set_trainable(g, false);
    for (const auto& g : cfg.layer_groups) den.params.set_trainable(g, true);
  }

  Den base = den;
  AdamState<S> adam;
  const double ema_b = ema_beta(cfg.ema_half_life);

  FinetuneReport rep;
  rep.regularizer = to_string(cfg.reg);

  const auto heldout = [&](long at) {
    const bool averaged = cfg.reg == Regularizer::offline_ema;
    double acc = 0;
    for (int i = 0; i < cfg.eval_samples; ++i) {
      const Field<S> x0 = detail::ddim_final<S>(den, sched, derive_seed(~cfg.seed, std::uint64_t(i)),
                                                grid, averaged);
      acc += rw.reward(x0);
    }
    rep.heldout_mse.push_back(-acc / cfg.eval_samples);
    rep.heldout_at.push_back(at);
  };

  double best_mse = std::numeric_limits<double>::infinity();
  int stale_evals = 0;
  int bad_streak = 0;
  bool have_base_reward = false;
  std::uint64_t traj_counter = 0;
  const auto t0 = std::chrono::steady_clock::now();

  while (rep.trajectories < cfg.trajectories) {
    const int m = int(std::min<long>(cfg.batch, cfg.trajectories - rep.trajectories));
    den.params.zero_grad();
    double sum = 0, sum_sq = 0;
    bool bad = false;
    try {
      for (int b = 0; b < m; ++b) {
        const std::uint64_t s = derive_seed(cfg.seed, traj_counter + std::uint64_t(b));
        const double r = rollout_with_grad<S>(
            den, sched, cfg.truncate_last, rw, s, grid, 1.0 / m, nullptr,
            cfg.reg == Regularizer::distill ? &base : nullptr,
            cfg.reg == Regularizer::distill ? cfg.lambda_distill : 0.0);
        sum += r;
        sum_sq += r * r;
      }
    } catch (const Error&) {
      bad = true;
    }
    traj_counter += std::uint64_t(m);
    rep.trajectories += m;
    if (!bad)
      for (const auto& t : den.params.tensors)
        if (den.params.group_trainable(t.group) && !t.grad.isFinite().all()) {
          bad = true;
          break;
        }
    if (bad) {
      // skipped iteration: no update, but it feeds the divergence monitor
      rep.skipped += 1;
      bad_streak += 1;
      require(bad_streak < 500, "finetune: 500 consecutive bad iterations, aborting");
      continue;
    }

    const double mean_r = sum / m;
    if (!have_base_reward) {
      rep.base_reward = mean_r;
      have_base_reward = true;
    }
    // collapse monitor: rewards are negative residual scores, so 10x the
    // base mean is 10x worse
    if (mean_r < 10.0 * rep.base_reward && rep.base_reward < 0)
      bad_streak += 1;
    else
      bad_streak = 0;
    if (bad_streak >= 500)
      fail("finetune: reward collapsed (mean " + std::to_string(mean_r) + " vs base " +
           std::to_string(rep.base_reward) + " for 500 iterations)");

    if (cfg.reg == Regularizer::online_weight)
      apply_online_weight_reg(den.params, base.params, cfg.lambda_weight);
    if (cfg.clip_norm > 0) {
      double g2 = 0;
      for (const auto& t : den.params.tensors)
        if (den.params.group_trainable(t.group)) g2 += double(t.grad.matrix().squaredNorm());
      if (g2 > cfg.clip_norm * cfg.clip_norm) {
        const S scale = S(cfg.clip_norm / std::sqrt(g2));
        for (auto& t : den.params.tensors)
          if (den.params.group_trainable(t.group)) t.grad *= scale;
      }
    }
    adam_step(den.params, adam, S(cfg.lr));
    if (cfg.reg == Regularizer::offline_ema) ema_update(den.params, ema_b);

    rep.updates += 1;
    rep.reward_mean.push_back(mean_r);
    rep.reward_std.push_back(std::sqrt(std::max(0.0, sum_sq / m - mean_r * mean_r)));
    double d2 = 0;
    for (size_t i = 0; i < den.params.tensors.size(); ++i)
      d2 += double(
          (den.params.tensors[i].value - base.params.tensors[i].value).matrix().squaredNorm());
    rep.weight_drift.push_back(std::sqrt(d2));

    if (cfg.eval_every > 0 && rep.updates % cfg.eval_every == 0) {
      heldout(rep.updates);
      if (cfg.reg == Regularizer::early_stop) {
        if (rep.heldout_mse.back() < best_mse) {
          best_mse = rep.heldout_mse.back();
          stale_evals = 0;
        } else {
          stale_evals += 1;
        }
        if (stale_evals >= cfg.early_stop_patience) break;
      }
    }
    hook(rep.updates, std::as_const(den), std::as_const(rep));
    if (cfg.reg == Regularizer::early_stop && cfg.max_updates > 0 &&
        rep.updates >= cfg.max_updates)
      break;
  }

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep.seconds_per_1k = rep.trajectories > 0 ? secs / double(rep.trajectories) * 1000.0 : 0.0;

  if (cfg.reg != Regularizer::offline_ema)
    for (auto& t : den.params.tensors)
      if (den.params.group_trainable(t.group)) t.ema = t.value;

  if (cfg.eval_every == 0 || rep.updates % cfg.eval_every != 0) heldout(rep.updates);
  return rep;
}

// FNV-1a over the active and averaged weight bytes, for pinning a fine-tune
// to its base checkpoint in the manifest.
template <class S>
std::uint64_t params_fingerprint(const ParamStore<S>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto eat = [&h](const Vector<S>& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(v.data());
    for (long i = 0; i < long(sizeof(S)) * v.size(); ++i) {
      h ^= p[size_t(i)];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& t : params.tensors) {
    eat(t.value);
    eat(t.ema);
  }
  return h;
}

}  // namespace pirf
