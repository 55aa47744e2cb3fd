#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pirf/diffusion.hpp"
#include "pirf/residual.hpp"

namespace pirf {

// Reward on normalized model outputs: maps back to physical units, scores
// the negative mean squared residual, and chains the gradient through the
// per-channel scaling. Heavy math runs in double whatever the model scalar.
struct RewardOp {
  ResidualOperator op;
  Normalization norm;

  static RewardOp for_dataset(const Dataset& ds) { return {ds.residual_op(), ds.norm}; }

  template <class S>
  double reward(const Field<S>& x_norm) const {
    Field<double> phys = x_norm.template cast<double>();
    norm.denormalize(phys);
    return pirf::reward(op, phys);
  }

  // Returns the reward; grad receives d reward / d x_norm.
  template <class S>
  double reward_gradient(const Field<S>& x_norm, Field<S>& grad) const {
    Field<double> phys = x_norm.template cast<double>();
    norm.denormalize(phys);
    const Field<double> res = residual(op, phys);
    const double r = -double(res.mean_square());
    Field<double> g =
        residual_vjp(op, phys, Array2<double>((-2.0 / double(res.size())) * res.ch[0]));
    for (int c = 0; c < g.channels(); ++c) g.ch[c] *= std::max(norm.stdev[c], 1e-12);
    grad = g.template cast<S>();
    return r;
  }
};

// Value estimate at a noisy state: the reward of the one-shot denoised
// prediction, v(x) = r(D(x, sigma)).
template <class S, class Den, class RW>
double value_estimate(const Den& den, const RW& rw, const Field<S>& x, double sigma,
                      bool use_ema = false) {
  return rw.reward(denoise(den, x, S(sigma), use_ema, static_cast<DenoiserTape<S>*>(nullptr)));
}

// Value and its gradient wrt the state: one forward and one model backward,
// reading the active (non-EMA) weights; see ema_snapshot for the averaged
// model.
template <class S, class Den, class RW>
double value_gradient(Den& den, const RW& rw, const Field<S>& x, double sigma, Field<S>& gx) {
  DenoiserTape<S> tape;
  const Field<S> d = denoise(den, x, S(sigma), false, &tape);
  Field<S> gd;
  const double v = rw.reward_gradient(d, gd);
  gx = denoise_backward(den, tape, gd, false);
  return v;
}

struct GuidanceConfig {
  double scale = 0.0;            // guidance strength, 0 recovers the plain sampler
  double guided_fraction = 0.2;  // trailing fraction of sampling steps guided
  int corrections = 0;           // post-sampling ascent steps
  double correction_step = 1e-3;

  void validate() const {
    require(scale >= 0, "GuidanceConfig: scale must be >= 0");
    require(guided_fraction > 0 && guided_fraction <= 1,
            "GuidanceConfig: guided_fraction outside (0, 1]");
    require(corrections >= 0, "GuidanceConfig: corrections must be >= 0");
    require(correction_step > 0, "GuidanceConfig: correction_step must be positive");
  }
};

// Value-guided Heun sampler: over the trailing guided steps the posterior
// mean is shifted by scale * Sigma_t * grad_x v(x), with Sigma_t the DDPM
// posterior variance of the matching VP schedule (a scalar; the scale search
// absorbs the convention). One value gradient is computed per guided step and
// the shift rides both Heun sub-evaluations. The shift lives in the VP state,
// so it maps into the EDM state through both sqrt(alpha_bar) factors. The
// final transition has zero posterior variance, which keeps x_0 = D exactly.
template <class S, class Den, class RW>
Trajectory<S> guided_heun_sample(Den& den, const NoiseSchedule& sched, std::uint64_t seed,
                                 const RW& rw, const GuidanceConfig& cfg,
                                 const GridSpec& grid) {
  cfg.validate();
  const int n_guided = int(std::lround(cfg.guided_fraction * sched.steps));

  Trajectory<S> traj;
  traj.seed = seed;
  Field<S> x = initial_state<S>(grid, data_channels(den), sched.sigma[0], seed);
  traj.states.push_back(x);
  traj.sigmas.push_back(sched.sigma[0]);

  for (int i = 0; i < sched.steps; ++i) {
    const double sc = sched.sigma[i], sn = sched.sigma[i + 1];
    const bool guided = i >= sched.steps - n_guided;

    Field<S> shift = x.zeros_like();
    bool have_shift = false;
    if (guided) {
      Field<S> gx;
      value_gradient(den, rw, x, sc, gx);
      traj.nrq += 1;
      traj.nbm += 1;
      require(gx.all_finite(),
              "guided_heun_sample: non-finite value gradient at step " + std::to_string(i));
      if (cfg.scale != 0) {
        const int t_cur = sched.steps - i;  // VP time of the current state
        const double ab_c = NoiseSchedule::alpha_bar_of_sigma(sc);
        const double ab_n = NoiseSchedule::alpha_bar_of_sigma(sn);
        const double k = cfg.scale * sched.posterior_variance(t_cur) / std::sqrt(ab_c * ab_n);
        shift = S(k) * gx;
        have_shift = true;
      }
    }

    const Field<S> d = denoise(den, x, S(sc), false, static_cast<DenoiserTape<S>*>(nullptr));
    const Field<S> slope = S(1.0 / sc) * (x - d);
    Field<S> xe = x + S(sn - sc) * slope;
    if (have_shift) xe = xe + shift;
    if (sn > 0) {
      const Field<S> d2 = denoise(den, xe, S(sn), false, static_cast<DenoiserTape<S>*>(nullptr));
      const Field<S> slope2 = S(1.0 / sn) * (xe - d2);
      x = x + S(0.5 * (sn - sc)) * (slope + slope2);
      if (have_shift) x = x + shift;
    } else {
      x = xe;
    }
    require(x.all_finite(),
            "guided_heun_sample: non-finite state after step " + std::to_string(i));
    traj.states.push_back(x);
    traj.sigmas.push_back(sn);
  }
  return traj;
}

struct CorrectionReport {
  int applied = 0;               // ascent steps actually taken
  int queries = 0;               // reward evaluations spent
  bool early_stop = false;       // reward fell on 3 consecutive evaluations
  std::vector<double> rewards;   // reward seen before each query's step
};

// Post-sampling correction: gradient ascent on the reward in sample space,
// x <- x + step_size * grad r(x). Stops early once the reward has decreased
// on 3 consecutive evaluations; the caller sees that through the report.
template <class S, class RW>
CorrectionReport cocogen_correct(Field<S>& x, const RW& rw, int m, double step_size) {
  require(m >= 0, "cocogen_correct: negative step count");
  require(step_size > 0, "cocogen_correct: step size must be positive");
  CorrectionReport rep;
  int falling = 0;
  for (int k = 0; k < m; ++k) {
    Field<S> g;
    const double r = rw.reward_gradient(x, g);
    rep.queries += 1;
    if (!rep.rewards.empty() && r < rep.rewards.back())
      falling += 1;
    else
      falling = 0;
    rep.rewards.push_back(r);
    if (falling >= 3) {
      rep.early_stop = true;
      break;
    }
    x = x + S(step_size) * g;
    rep.applied += 1;
  }
  return rep;
}

// Guided sampling followed by reward-ascent correction of the final sample.
// Counter accounting: each guided step costs one reward query and one model
// backward; each correction costs one reward query and no backward.
template <class S, class Den, class RW>
Trajectory<S> cocogen_sample(Den& den, const NoiseSchedule& sched, std::uint64_t seed,
                             const RW& rw, const GuidanceConfig& cfg, const GridSpec& grid,
                             CorrectionReport* report = nullptr) {
  Trajectory<S> traj = guided_heun_sample<S>(den, sched, seed, rw, cfg, grid);
  Field<S> x = traj.states.back();
  const CorrectionReport rep = cocogen_correct(x, rw, cfg.corrections, cfg.correction_step);
  traj.states.back() = x;
  traj.nrq += rep.queries;
  if (report) *report = rep;
  return traj;
}

// Reward-weighted regression with a hard window: keep the samples whose
// reward exceeds the threshold. Stored samples are physical, so rewards come
// straight from the dataset's residual operator.
inline Dataset rwr_filter(const Dataset& ds, double threshold) {
  const ResidualOperator op = ds.residual_op();
  Dataset out = ds;
  out.samples.clear();
  for (const auto& s : ds.samples) {
    const double r = -double(residual_mean_square(op, s.cast<double>()));
    if (r > threshold) out.samples.push_back(s);
  }
  require(!out.samples.empty(), "rwr_filter: no samples with reward above " +
                                    std::to_string(threshold) + "; lower the threshold");
  out.provenance["filter"] = {{"threshold", threshold},
                              {"kept", out.count()},
                              {"from", ds.count()}};
  return out;
}

struct PidmConfig {
  double gamma = 0.0;      // weight on the squared reward of the prediction
  bool snr_scaled = false;  // gamma_t = gamma / sigma^2 instead of constant

  double gamma_at(double sigma) const { return snr_scaled ? gamma / (sigma * sigma) : gamma; }
};

// Loss hook adding gamma_t * r(D)^2 per sample, gradient 2 gamma_t r dr/dD.
template <class S>
DenoisedLossHook<S> pidm_hook(const RewardOp& rw, const PidmConfig& cfg) {
  require(cfg.gamma >= 0, "pidm: gamma must be >= 0");
  return [rw, cfg](const Field<S>& d, S sigma, Field<S>& gd) -> double {
    const double g_t = cfg.gamma_at(double(sigma));
    if (g_t == 0.0) return 0.0;
    Field<S> gr;
    const double r = rw.reward_gradient(d, gr);
    for (int c = 0; c < gd.channels(); ++c) gd.ch[c] += S(2.0 * g_t * r) * gr.ch[c];
    return g_t * r * r;
  };
}

// Denoising objective augmented with the squared reward of the prediction.
// gamma = 0 takes the exact denoise_loss code path.
template <class S, class Den>
double pidm_loss(Den& den, const std::vector<Field<S>>& batch, Rng& rng, const RewardOp& rw,
                 const PidmConfig& cfg, const TrainingSigma& dist = {}, bool with_grads = false) {
  const DenoisedLossHook<S> hook =
      cfg.gamma != 0.0 ? pidm_hook<S>(rw, cfg) : DenoisedLossHook<S>{};
  return denoise_loss(den, batch, rng, dist, with_grads, hook);
}

}  // namespace pirf
