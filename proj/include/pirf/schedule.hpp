#pragma once

#include <cmath>
#include <vector>

#include "pirf/common.hpp"
#include "pirf/rng.hpp"

namespace pirf {

// Noise schedule with two equivalent views.
//
// Sampler view (index i = 0..steps): noise levels sigma[i], strictly
// decreasing from sigma_max to sigma_min with sigma[steps] = 0, spaced by the
// EDM rule sigma_i = (sigma_max^(1/rho) + i/(steps-1) * (sigma_min^(1/rho) -
// sigma_max^(1/rho)))^rho.
//
// Variance-preserving view (time t = steps - i): alpha_bar_t = 1/(1+sigma^2),
// so alpha_bar_0 = 1 at the clean end and beta_t = 1 - alpha_bar_t /
// alpha_bar_{t-1}. The state map between views is x_vp = sqrt(alpha_bar) *
// x_edm; both coincide at sigma = 0.
struct NoiseSchedule {
  int steps = 20;
  double sigma_min = 0.002, sigma_max = 80.0, rho = 7.0;
  std::vector<double> sigma;  // size steps+1, sigma[steps] = 0

  static NoiseSchedule edm(int steps, double sigma_min = 0.002, double sigma_max = 80.0,
                           double rho = 7.0) {
    require(steps >= 1, "NoiseSchedule: need at least 1 step");
    require(0 < sigma_min && sigma_min < sigma_max && rho > 0, "NoiseSchedule: bad parameters");
    NoiseSchedule s;
    s.steps = steps;
    s.sigma_min = sigma_min;
    s.sigma_max = sigma_max;
    s.rho = rho;
    s.sigma.resize(steps + 1);
    const double a = std::pow(sigma_max, 1.0 / rho), b = std::pow(sigma_min, 1.0 / rho);
    for (int i = 0; i < steps; ++i)  // steps = 1 keeps the single level sigma_max
      s.sigma[i] = std::pow(a + (b - a) * double(i) / double(std::max(steps - 1, 1)), rho);
    s.sigma[steps] = 0.0;
    return s;
  }

  static double alpha_bar_of_sigma(double sig) { return 1.0 / (1.0 + sig * sig); }
  static double sigma_of_alpha_bar(double ab) {
    require(ab > 0.0 && ab <= 1.0, "NoiseSchedule: alpha_bar outside (0, 1]");
    return std::sqrt((1.0 - ab) / ab);
  }

  // Sampler-view accessors.
  double sigma_at(int i) const {
    require(i >= 0 && i <= steps, "NoiseSchedule: index out of range");
    return sigma[i];
  }

  // VP-view accessors, indexed by time t in [0, steps] (t = steps - i).
  double alpha_bar(int t) const { return alpha_bar_of_sigma(sigma_at(steps - t)); }
  double beta(int t) const {
    require(t >= 1, "NoiseSchedule: beta is defined for t >= 1");
    return 1.0 - alpha_bar(t) / alpha_bar(t - 1);
  }
  // DDPM posterior variance of the reverse transition ending at time t-1.
  // Zero at t = 1 since the clean end has alpha_bar exactly 1.
  double posterior_variance(int t) const {
    require(t >= 1, "NoiseSchedule: posterior variance is defined for t >= 1");
    return (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)) * beta(t);
  }

  std::vector<double> vp_alpha_bar() const {
    std::vector<double> ab(steps + 1);
    for (int t = 0; t <= steps; ++t) ab[t] = alpha_bar(t);
    return ab;
  }
  std::vector<double> vp_beta() const {
    std::vector<double> b(steps + 1, 0.0);
    for (int t = 1; t <= steps; ++t) b[t] = beta(t);
    return b;
  }
};

// Training-time noise level distribution: log-normal ln(sigma) ~ N(mean,
// std^2) with the EDM defaults.
struct TrainingSigma {
  double log_mean = -1.2, log_std = 1.2;
  double sample(Rng& rng) const { return std::exp(log_mean + log_std * rng.normal()); }
};

}  // namespace pirf
