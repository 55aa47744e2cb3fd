#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "pirf/dataset.hpp"
#include "pirf/denoiser.hpp"
#include "pirf/schedule.hpp"

namespace pirf {

// Forward noising in the VP view: x_t = sqrt(ab) x0 + sqrt(1-ab) eps with
// ab = alpha_bar at time t. t = 0 sits at alpha_bar = 1 and passes x0 through.
template <class S>
Field<S> add_noise(const NoiseSchedule& sched, const Field<S>& x0, int t, const Field<S>& eps) {
  require(t >= 0 && t <= sched.steps, "add_noise: t outside [0, steps]");
  require(x0.grid.same_shape(eps.grid) && x0.channels() == eps.channels(),
          "add_noise: eps shape mismatch");
  const S ab = S(sched.alpha_bar(t));
  return std::sqrt(ab) * x0 + std::sqrt(1 - ab) * eps;
}

template <class S>
Field<S> gaussian_field(const GridSpec& grid, int channels, Rng& rng) {
  Field<S> f(grid, channels);
  for (auto& c : f.ch)
    for (long i = 0; i < c.size(); ++i) c.data()[i] = S(rng.normal());
  return f;
}

// Optional extra objective evaluated on the denoised estimate: returns one
// sample's loss contribution and writes its gradient wrt d into grad_d
// (normalized units; batch averaging happens in the caller).
template <class S>
using DenoisedLossHook = std::function<double(const Field<S>& d, S sigma, Field<S>& grad_d)>;

// Mean squared denoising error over a batch with explicit noise draws:
// mean over samples of mean((D(x0 + sigma eps, sigma) - x0)^2). With
// with_grads set, parameter gradients accumulate into the store. Den is any
// type usable through denoise/denoise_backward; tests substitute fixed-output
// stubs through this seam.
template <class S, class Den>
double denoise_loss_with(Den& den, const std::vector<Field<S>>& batch,
                         const std::vector<S>& sigmas, const std::vector<Field<S>>& eps,
                         bool with_grads = false, const DenoisedLossHook<S>& hook = nullptr) {
  require(!batch.empty(), "denoise_loss: empty batch");
  require(batch.size() == sigmas.size() && batch.size() == eps.size(),
          "denoise_loss: batch/noise length mismatch");
  double loss = 0.0;
  const double bs = double(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    const Field<S> xt = batch[b] + sigmas[b] * eps[b];
    DenoiserTape<S> tape;
    const Field<S> d = denoise(den, xt, sigmas[b], false, with_grads ? &tape : nullptr);
    const Field<S> err = d - batch[b];
    loss += double(err.mean_square()) / bs;
    if (with_grads || hook) {
      Field<S> gd = err.zeros_like();
      if (with_grads) {
        const S w = S(2.0 / (bs * double(err.size())));
        for (int c = 0; c < gd.channels(); ++c) gd.ch[c] = w * err.ch[c];
      }
      if (hook) {
        // the hook reports one sample's loss and gradient; average both here
        Field<S> gh = err.zeros_like();
        loss += hook(d, sigmas[b], gh) / bs;
        if (with_grads)
          for (int c = 0; c < gd.channels(); ++c) gd.ch[c] += S(1.0 / bs) * gh.ch[c];
      }
      if (with_grads) denoise_backward(den, tape, gd);
    }
  }
  require(std::isfinite(loss), "denoise_loss: non-finite loss");
  return loss;
}

// Noise draws per the training distribution, then the explicit-noise loss.
template <class S, class Den>
double denoise_loss(Den& den, const std::vector<Field<S>>& batch, Rng& rng,
                    const TrainingSigma& dist = {}, bool with_grads = false,
                    const DenoisedLossHook<S>& hook = nullptr) {
  std::vector<S> sigmas;
  std::vector<Field<S>> eps;
  for (const auto& x0 : batch) {
    sigmas.push_back(S(dist.sample(rng)));
    eps.push_back(gaussian_field<S>(x0.grid, x0.channels(), rng));
  }
  return denoise_loss_with(den, batch, sigmas, eps, with_grads, hook);
}

// Weight on (x - d) in one DDIM update. Factored out because the update is
// affine in (x, d): the same number is the transition's Jacobian diagonal,
// which reward backpropagation reuses so forward and backward agree bitwise.
inline double ddim_coef(double sigma_cur, double sigma_next, double sigma_noise = 0.0) {
  require(sigma_cur > 0 && sigma_next >= 0 && sigma_next < sigma_cur,
          "ddim_update: noise levels must decrease");
  const double ab_n = NoiseSchedule::alpha_bar_of_sigma(sigma_next);
  // 1 - ab_n written as sigma^2 * ab_n to avoid cancellation at small sigma
  const double head = sigma_next * sigma_next * ab_n - sigma_noise * sigma_noise;
  require(head >= -1e-15, "ddim_update: sigma_noise exceeds the transition variance");
  return std::sqrt(std::max(head, 0.0) / ab_n) / sigma_cur;
}

// One DDIM update between two noise levels given the denoised estimate d,
// phrased in the EDM state (the VP formula divided through by
// sqrt(alpha_bar_next)):
//   x_next = d + sqrt((1-ab_n-s^2)/ab_n)/sigma_cur * (x - d) + s/sqrt(ab_n) eps
// with s = sigma_noise and ab_n = 1/(1+sigma_next^2). s = 0 is the
// deterministic sampler; sigma_next = 0 collapses to x_next = d.
template <class S>
Field<S> ddim_update(const Field<S>& x, const Field<S>& d, double sigma_cur, double sigma_next,
                     double sigma_noise = 0.0, const Field<S>* eps = nullptr) {
  const S coef = S(ddim_coef(sigma_cur, sigma_next, sigma_noise));
  Field<S> out = d + coef * (x - d);
  if (sigma_noise > 0) {
    require(eps != nullptr, "ddim_update: stochastic step needs a noise field");
    const double ab_n = NoiseSchedule::alpha_bar_of_sigma(sigma_next);
    out = out + S(sigma_noise / std::sqrt(ab_n)) * (*eps);
  }
  return out;
}

// ddim_update applied to the model's denoised estimate.
template <class S, class Den>
Field<S> ddim_step(Den& den, const Field<S>& x, double sigma_cur, double sigma_next,
                   double sigma_noise = 0.0, const Field<S>* eps = nullptr, bool use_ema = false) {
  const Field<S> d = denoise(den, x, S(sigma_cur), use_ema, static_cast<DenoiserTape<S>*>(nullptr));
  return ddim_update(x, d, sigma_cur, sigma_next, sigma_noise, eps);
}

// Sampling record. States live in the EDM rescaling of normalized data space
// (x = sqrt(1 + sigma^2) x_vp); the final state is the sample, still in
// normalized units. Counters track reward queries and model backward passes
// spent by guidance; plain samplers leave them zero.
template <class S>
struct Trajectory {
  std::vector<Field<S>> states;  // x_T .. x_0, size steps+1
  std::vector<double> sigmas;    // noise level per state
  long nrq = 0, nbm = 0;
  std::uint64_t seed = 0;

  const Field<S>& sample() const { return states.back(); }
};

namespace detail {

inline GridSpec sampler_grid(const DenoiserConfig& cfg, const GridSpec* grid) {
  if (grid) return *grid;
  GridSpec g;
  g.spatial_dims = 2;
  g.resolution = {cfg.rows, cfg.cols};
  g.domain_length = {1.0, 1.0};
  return g;
}

}  // namespace detail

// Pure noise at the top of the ladder: x_T = sigma0 * eps with eps drawn from
// the given seed. Every sampler starts here so that methods compared under a
// shared seed integrate the same noise realization.
template <class S>
Field<S> initial_state(const GridSpec& grid, int channels, double sigma0, std::uint64_t seed) {
  Rng rng(seed);
  Field<S> x = gaussian_field<S>(grid, channels, rng);
  for (auto& c : x.ch) c *= S(sigma0);
  return x;
}

// Deterministic DDIM rollout: one denoiser evaluation per step.
template <class S>
Trajectory<S> ddim_rollout(const Denoiser<S>& den, const NoiseSchedule& sched, std::uint64_t seed,
                           bool use_ema = false, const GridSpec* grid = nullptr) {
  const GridSpec g = detail::sampler_grid(den.cfg, grid);
  Trajectory<S> traj;
  traj.seed = seed;
  Field<S> x = initial_state<S>(g, den.cfg.data_channels, sched.sigma[0], seed);
  traj.states.push_back(x);
  traj.sigmas.push_back(sched.sigma[0]);
  for (int i = 0; i < sched.steps; ++i) {
    x = ddim_step(den, x, sched.sigma[i], sched.sigma[i + 1], 0.0,
                  static_cast<const Field<S>*>(nullptr), use_ema);
    require(x.all_finite(), "ddim_rollout: non-finite state after step " + std::to_string(i));
    traj.states.push_back(x);
    traj.sigmas.push_back(sched.sigma[i + 1]);
  }
  return traj;
}

// Deterministic EDM Heun sampler: trapezoidal correction on dx/dsigma =
// (x - D)/sigma at every step except the final one, which is plain Euler
// (steps = 1 therefore degenerates to a single Euler step).
template <class S>
Trajectory<S> heun_sample(const Denoiser<S>& den, const NoiseSchedule& sched, std::uint64_t seed,
                          bool use_ema = false, const GridSpec* grid = nullptr) {
  const GridSpec g = detail::sampler_grid(den.cfg, grid);
  Trajectory<S> traj;
  traj.seed = seed;
  Field<S> x = initial_state<S>(g, den.cfg.data_channels, sched.sigma[0], seed);
  traj.states.push_back(x);
  traj.sigmas.push_back(sched.sigma[0]);

  for (int i = 0; i < sched.steps; ++i) {
    const double sc = sched.sigma[i], sn = sched.sigma[i + 1];
    const Field<S> d = denoise(den, x, S(sc), use_ema);
    const Field<S> slope = S(1.0 / sc) * (x - d);
    Field<S> xe = x + S(sn - sc) * slope;
    if (sn > 0) {
      const Field<S> d2 = denoise(den, xe, S(sn), use_ema);
      const Field<S> slope2 = S(1.0 / sn) * (xe - d2);
      x = x + S(0.5 * (sn - sc)) * (slope + slope2);
    } else {
      x = xe;
    }
    require(x.all_finite(), "heun_sample: non-finite state after step " + std::to_string(i));
    traj.states.push_back(x);
    traj.sigmas.push_back(sn);
  }
  return traj;
}

// ---- base training ----------------------------------------------------------

struct TrainConfig {
  DenoiserConfig arch;  // plane shape and channel count are taken from the dataset
  long steps = 20000;
  int batch = 4;
  double lr = 1e-3;
  double ema_half_life = 50000;
  std::uint64_t seed = 0;
  int log_every = 100;
  int smooth_window = 100;
  TrainingSigma sigma_dist;
  std::filesystem::path checkpoint_dir;  // empty: keep in memory only
};

struct TrainReport {
  std::vector<double> loss_curve;  // mean loss per log_every window
  double initial_smoothed = 0.0, final_smoothed = 0.0;
  long steps = 0;
};

// Train a denoiser on normalized dataset samples with Adam and an EMA track.
// Pure function of (dataset bytes, config): batch picks, noise levels and
// noise fields all come from one seeded stream. Aborts when the loss sits
// above 10x its initial smoothed level for 1000 consecutive steps. progress,
// when set, is called once per log window with (steps done, window mean).
template <class S = float>
TrainReport train_base(const Dataset& ds, const TrainConfig& cfg, Denoiser<S>& den,
                       const DenoisedLossHook<S>& hook = nullptr,
                       const std::function<void(long, double)>& progress = nullptr) {
  require(!ds.samples.empty(), "train_base: empty dataset");
  require(cfg.steps >= 1 && cfg.batch >= 1, "train_base: bad step or batch count");

  DenoiserConfig arch = cfg.arch;
  arch.data_channels = ds.channels();
  arch.rows = ds.grid.plane_rows();
  arch.cols = ds.grid.plane_cols();
  den = Denoiser<S>::make(arch);

  std::vector<Field<S>> data;
  data.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    Field<float> f = s;
    ds.norm.normalize(f);
    data.push_back(f.template cast<S>());
  }

  Rng rng(cfg.seed);
  AdamState<S> adam;
  const double beta = ema_beta(cfg.ema_half_life);
  TrainReport rep;
  rep.steps = cfg.steps;

  std::vector<double> recent;  // smoothing window
  double window_acc = 0.0;
  long window_n = 0;
  double initial = -1.0;
  int high_steps = 0;

  for (long step = 0; step < cfg.steps; ++step) {
    std::vector<Field<S>> batch;
    for (int b = 0; b < cfg.batch; ++b)
      batch.push_back(data[size_t(rng.uniform() * double(data.size())) % data.size()]);
    den.params.zero_grad();
    double loss = 0.0;
    try {
      loss = denoise_loss(den, batch, rng, cfg.sigma_dist, true, hook);
    } catch (const Error& e) {
      fail("train_base: step " + std::to_string(step) + " (seed " + std::to_string(cfg.seed) +
           "): " + e.what());
    }
    adam_step(den.params, adam, S(cfg.lr));
    ema_update(den.params, beta);

    recent.push_back(loss);
    if (long(recent.size()) > cfg.smooth_window) recent.erase(recent.begin());
    const double smoothed =
        std::accumulate(recent.begin(), recent.end(), 0.0) / double(recent.size());
    if (step + 1 == std::min<long>(cfg.smooth_window, cfg.steps)) initial = smoothed;
    if (initial > 0 && loss > 10.0 * initial) {
      if (++high_steps >= 1000)
        fail("train_base: diverged at step " + std::to_string(step) + " (loss " +
             std::to_string(loss) + ", initial smoothed " + std::to_string(initial) + ")");
    } else {
      high_steps = 0;
    }

    window_acc += loss;
    if (++window_n == cfg.log_every || step + 1 == cfg.steps) {
      rep.loss_curve.push_back(window_acc / double(window_n));
      if (progress) progress(step + 1, window_acc / double(window_n));
      window_acc = 0.0;
      window_n = 0;
    }
    if (step + 1 == cfg.steps) rep.final_smoothed = smoothed;
  }
  rep.initial_smoothed = initial;

  if (!cfg.checkpoint_dir.empty()) {
    nlohmann::json extra;
    extra["step"] = cfg.steps;
    extra["lr"] = cfg.lr;
    extra["ema_half_life"] = cfg.ema_half_life;
    extra["train_seed"] = cfg.seed;
    extra["dataset"] = {{"pde", to_string(ds.pde)},
                        {"count", ds.count()},
                        {"seed", ds.provenance.value("seed", std::uint64_t(0))},
                        {"normalization", {{"mean", ds.norm.mean}, {"std", ds.norm.stdev}}}};
    save_checkpoint(den, cfg.checkpoint_dir, extra);
  }
  return rep;
}

}  // namespace pirf
