#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <pirf/diffusion.hpp>

#include <cstring>
#include <filesystem>

using pirf::Dataset;
using pirf::Denoiser;
using pirf::DenoiserConfig;
using pirf::DenoiserTape;
using pirf::Field;
using pirf::GridSpec;
using pirf::NoiseSchedule;
using pirf::Pde;
using pirf::TrainConfig;
using pirf::Trajectory;

namespace {

GridSpec plane(int rows, int cols) {
  GridSpec g;
  g.spatial_dims = 2;
  g.resolution = {rows, cols};
  g.domain_length = {1.0, 1.0};
  return g;
}

// Fixed-output stand-ins exercised through the same seam as the real model.
struct OracleOnClean {
  const std::vector<Field<double>>* clean;
  size_t next = 0;
};
Field<double> denoise(OracleOnClean& s, const Field<double>&, double, bool,
                      DenoiserTape<double>*) {
  return (*s.clean)[s.next++ % s.clean->size()];
}
void denoise_backward(OracleOnClean&, const DenoiserTape<double>&, const Field<double>&) {}

struct ZeroModel {};
Field<double> denoise(ZeroModel&, const Field<double>& x, double, bool, DenoiserTape<double>*) {
  return x.zeros_like();
}
void denoise_backward(ZeroModel&, const DenoiserTape<double>&, const Field<double>&) {}

bool same_bits(const Field<float>& a, const Field<float>& b) {
  for (int c = 0; c < a.channels(); ++c)
    if (std::memcmp(a.ch[c].data(), b.ch[c].data(), sizeof(float) * a.ch[c].size()) != 0)
      return false;
  return true;
}

DenoiserConfig tiny_arch() {
  DenoiserConfig cfg;
  cfg.data_channels = 2;
  cfg.rows = 16;
  cfg.cols = 16;
  cfg.widths = {4, 6};
  cfg.emb_dim = 8;
  cfg.init_seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("forward noising follows the closed form") {
  const auto sched = NoiseSchedule::edm(20);
  const GridSpec g = plane(12, 16);
  pirf::Rng rng(42);
  const auto x0 = pirf::gaussian_field<double>(g, 2, rng);
  const auto eps = pirf::gaussian_field<double>(g, 2, rng);

  // zero noise level (alpha_bar = 1) passes the input through unchanged
  const auto same = pirf::add_noise(sched, x0, 0, eps);
  for (int c = 0; c < 2; ++c) CHECK((same.ch[c] == x0.ch[c]).all());

  // zero input isolates the noise term
  const int t = 7;
  const double ab = sched.alpha_bar(t);
  const auto noise_only = pirf::add_noise(sched, x0.zeros_like(), t, eps);
  for (int c = 0; c < 2; ++c)
    CHECK((noise_only.ch[c] - std::sqrt(1.0 - ab) * eps.ch[c]).abs().maxCoeff() == 0.0);

  // zero noise field isolates the signal term
  const auto signal_only = pirf::add_noise(sched, x0, t, eps.zeros_like());
  for (int c = 0; c < 2; ++c)
    CHECK((signal_only.ch[c] - std::sqrt(ab) * x0.ch[c]).abs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(pirf::add_noise(sched, x0, 21, eps), pirf::Error);
  CHECK_THROWS_AS(pirf::add_noise(sched, x0, -1, eps), pirf::Error);
  const auto bad = pirf::gaussian_field<double>(plane(12, 16), 1, rng);
  CHECK_THROWS_AS(pirf::add_noise(sched, x0, t, bad), pirf::Error);
}

TEST_CASE("noised marginals match the schedule moments") {
  const auto sched = NoiseSchedule::edm(20);
  const int t = 10, draws = 10000;
  const double ab = sched.alpha_bar(t);
  const GridSpec g = plane(8, 8);
  Field<double> x0(g, 1);
  x0.ch[0].setConstant(0.7);

  pirf::Rng rng(2024);
  Eigen::ArrayXXd sum = Eigen::ArrayXXd::Zero(8, 8), sumsq = Eigen::ArrayXXd::Zero(8, 8);
  for (int k = 0; k < draws; ++k) {
    const auto xt = pirf::add_noise(sched, x0, t, pirf::gaussian_field<double>(g, 1, rng));
    sum += xt.ch[0];
    sumsq += xt.ch[0].square();
  }
  const Eigen::ArrayXXd mean = sum / draws;
  const Eigen::ArrayXXd var = (sumsq - draws * mean.square()) / (draws - 1);

  // per-pixel moments against the marginal N(sqrt(ab) x0, 1-ab), +-3 MC std
  const double mean_tol = 3.0 * std::sqrt((1.0 - ab) / draws);
  const double var_tol = 3.0 * (1.0 - ab) * std::sqrt(2.0 / (draws - 1));
  CHECK((mean - std::sqrt(ab) * 0.7).abs().maxCoeff() < mean_tol);
  CHECK((var - (1.0 - ab)).abs().maxCoeff() < var_tol);
}

TEST_CASE("denoising loss on fixed-output models") {
  const GridSpec g = plane(10, 12);
  pirf::Rng rng(7);
  std::vector<Field<double>> batch;
  for (int b = 0; b < 3; ++b) batch.push_back(pirf::gaussian_field<double>(g, 2, rng));
  std::vector<double> sigmas = {0.3, 1.0, 4.0};
  std::vector<Field<double>> eps;
  for (int b = 0; b < 3; ++b) eps.push_back(pirf::gaussian_field<double>(g, 2, rng));

  // a model that recovers the clean sample exactly has zero loss
  OracleOnClean perfect{&batch};
  CHECK(pirf::denoise_loss_with(perfect, batch, sigmas, eps) == 0.0);

  // a model stuck at zero pays the mean squared size of the data
  ZeroModel zero;
  double expect = 0.0;
  for (const auto& x0 : batch) expect += x0.mean_square() / 3.0;
  CHECK(pirf::denoise_loss_with(zero, batch, sigmas, eps) ==
        doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(pirf::denoise_loss_with(zero, batch, {0.3}, eps), pirf::Error);
}

TEST_CASE("loss gradients match finite differences on a tiny model") {
  DenoiserConfig cfg;
  cfg.data_channels = 1;
  cfg.rows = 8;
  cfg.cols = 8;
  cfg.widths = {2};
  cfg.emb_dim = 2;
  cfg.block_kernel = 1;
  cfg.init_seed = 5;
  auto den = Denoiser<double>::make(cfg);
  REQUIRE(den.params.total_params() <= 100);
  // perturb the zero-initialized head so its gradient path is generic
  pirf::Rng prng(17);
  for (auto& t : den.params.tensors)
    for (long i = 0; i < t.size(); ++i) t.value(i) += 0.05 * prng.normal();

  const GridSpec g = plane(8, 8);
  pirf::Rng rng(19);
  std::vector<Field<double>> batch = {pirf::gaussian_field<double>(g, 1, rng),
                                      pirf::gaussian_field<double>(g, 1, rng)};
  std::vector<double> sigmas = {0.4, 1.7};
  std::vector<Field<double>> eps = {pirf::gaussian_field<double>(g, 1, rng),
                                    pirf::gaussian_field<double>(g, 1, rng)};

  den.params.zero_grad();
  pirf::denoise_loss_with(den, batch, sigmas, eps, true);

  const double h = 1e-5;
  for (auto& t : den.params.tensors)
    for (long i = 0; i < t.size(); ++i) {
      const double keep = t.value(i);
      t.value(i) = keep + h;
      const double lp = pirf::denoise_loss_with(den, batch, sigmas, eps);
      t.value(i) = keep - h;
      const double lm = pirf::denoise_loss_with(den, batch, sigmas, eps);
      t.value(i) = keep;
      const double fd = (lp - lm) / (2 * h);
      const double got = t.grad(i);
      INFO(t.name, " [", i, "] fd ", fd, " analytic ", got);
      // absolute term absorbs central-difference roundoff
      CHECK(std::abs(fd - got) < 1e-4 * std::max(std::abs(fd), std::abs(got)) + 1e-10);
    }
}

TEST_CASE("ddim update follows the variance-preserving formula") {
  const auto sched = NoiseSchedule::edm(20);
  const GridSpec g = plane(9, 8);
  pirf::Rng rng(23);

  for (int i = 0; i < sched.steps; ++i) {
    const double sc = sched.sigma[i], sn = sched.sigma[i + 1];
    const auto x = pirf::gaussian_field<double>(g, 2, rng);
    const auto d = pirf::gaussian_field<double>(g, 2, rng);
    const auto noise = pirf::gaussian_field<double>(g, 2, rng);
    const double ab_c = NoiseSchedule::alpha_bar_of_sigma(sc);
    const double ab_n = NoiseSchedule::alpha_bar_of_sigma(sn);

    for (double frac : {0.0, 0.5}) {
      if (sn == 0.0 && frac > 0.0) continue;
      const double s = frac * std::sqrt(1.0 - ab_n);
      const auto got = pirf::ddim_update(x, d, sc, sn, s, &noise);

      // reference: the VP-view update evaluated verbatim, mapped back
      Field<double> ref = x.zeros_like();
      for (int c = 0; c < 2; ++c) {
        const auto xt = std::sqrt(ab_c) * x.ch[c];
        const auto prev = std::sqrt(ab_n) * d.ch[c] +
                          std::sqrt(1.0 - ab_n - s * s) * (xt - std::sqrt(ab_c) * d.ch[c]) /
                              std::sqrt(1.0 - ab_c) +
                          s * noise.ch[c];
        ref.ch[c] = prev / std::sqrt(ab_n);
      }
      INFO("step ", i, " noise fraction ", frac);
      // absolute on unit-scale fields: the reference's literal 1-ab cancels
      // near sigma_min, so its own roundoff dominates any relative reading
      double worst = 0.0;
      for (int c = 0; c < 2; ++c)
        worst = std::max(worst, (got.ch[c] - ref.ch[c]).abs().maxCoeff());
      CHECK(worst < 1e-8);
    }
  }

  // final step collapses onto the denoised estimate exactly
  const auto x = pirf::gaussian_field<double>(g, 2, rng);
  const auto d = pirf::gaussian_field<double>(g, 2, rng);
  const auto last = pirf::ddim_update(x, d, sched.sigma[19], 0.0);
  for (int c = 0; c < 2; ++c) CHECK((last.ch[c] == d.ch[c]).all());

  // a zero model contracts the state by the VP ratio sqrt((1-ab_n)/(1-ab_c))
  ZeroModel zero;
  const double sc = sched.sigma[4], sn = sched.sigma[5];
  const auto got = pirf::ddim_step(zero, x, sc, sn);
  const double ab_c = NoiseSchedule::alpha_bar_of_sigma(sc);
  const double ab_n = NoiseSchedule::alpha_bar_of_sigma(sn);
  const double ratio =
      std::sqrt((1.0 - ab_n) / (1.0 - ab_c)) * std::sqrt(ab_c) / std::sqrt(ab_n);
  for (int c = 0; c < 2; ++c)
    CHECK((got.ch[c] - ratio * x.ch[c]).abs().maxCoeff() < 1e-14 * 80.0);

  // more noise than the transition holds is a schedule error
  CHECK_THROWS_AS(pirf::ddim_update(x, d, sc, sn, 2.0 * std::sqrt(1.0 - ab_n), &d), pirf::Error);
}

TEST_CASE("ddim rollout reruns bit-identically") {
  const auto den = Denoiser<float>::make(tiny_arch());
  const auto sched = NoiseSchedule::edm(20);
  const auto a = pirf::ddim_rollout(den, sched, 77);
  const auto b = pirf::ddim_rollout(den, sched, 77);

  CHECK(a.states.size() == 21);
  CHECK(a.sigmas.front() == 80.0);
  CHECK(a.sigmas.back() == 0.0);
  CHECK(a.nrq == 0);
  CHECK(a.nbm == 0);
  CHECK(a.seed == 77);
  for (size_t i = 0; i < a.states.size(); ++i) CHECK(same_bits(a.states[i], b.states[i]));

  // a different seed integrates different noise
  const auto c = pirf::ddim_rollout(den, sched, 78);
  CHECK(!same_bits(a.states[0], c.states[0]));
}

TEST_CASE("heun sampler stays finite at the paper step counts") {
  const auto den = Denoiser<float>::make(tiny_arch());
  for (int steps : {20, 40, 80}) {
    CAPTURE(steps);
    const auto sched = NoiseSchedule::edm(steps);
    const auto traj = pirf::heun_sample(den, sched, 5);
    CHECK(traj.states.size() == size_t(steps + 1));
    CHECK(traj.nrq == 0);
    CHECK(traj.nbm == 0);
    for (size_t i = 0; i < traj.states.size(); ++i) {
      CHECK(traj.states[i].all_finite());
      CHECK(traj.states[i].grid.same_shape(traj.states[0].grid));
    }
    for (size_t i = 1; i < traj.sigmas.size(); ++i) CHECK(traj.sigmas[i] < traj.sigmas[i - 1]);
  }

  // one step is plain Euler, which lands exactly on the denoised estimate
  const auto one = pirf::heun_sample(den, NoiseSchedule::edm(1), 5);
  CHECK(one.states.size() == 2);
  const auto d = pirf::denoise(den, one.states[0], 80.0f);
  for (int c = 0; c < d.channels(); ++c)
    CHECK((one.sample().ch[c] - d.ch[c]).abs().maxCoeff() < 1e-4f);
}

TEST_CASE("base training learns a toy dataset and checkpoints round-trip") {
  const auto ds = pirf::build_dataset(Pde::darcy, 160, 32, 11);
  const auto dir = std::filesystem::temp_directory_path() / "pirf_train_ckpt";
  std::filesystem::remove_all(dir);

  TrainConfig cfg;
  cfg.arch.widths = {12, 16};
  cfg.arch.emb_dim = 8;
  cfg.steps = 4000;
  cfg.batch = 4;
  cfg.seed = 5;
  cfg.checkpoint_dir = dir;

  Denoiser<float> den;
  const auto rep = pirf::train_base(ds, cfg, den);
  INFO("smoothed loss ", rep.initial_smoothed, " -> ", rep.final_smoothed);
  CHECK(rep.initial_smoothed > 0.0);
  CHECK(rep.final_smoothed < 0.5 * rep.initial_smoothed);
  CHECK(rep.loss_curve.size() == size_t(cfg.steps / cfg.log_every));
  for (double v : rep.loss_curve) CHECK(std::isfinite(v));

  nlohmann::json man;
  const auto back = pirf::load_checkpoint<float>(dir, &man);
  for (size_t i = 0; i < den.params.tensors.size(); ++i) {
    const auto& t = den.params.tensors[i];
    const auto& u = back.params.tensors[i];
    CHECK(std::memcmp(t.value.data(), u.value.data(), sizeof(float) * t.size()) == 0);
    CHECK(std::memcmp(t.ema.data(), u.ema.data(), sizeof(float) * t.size()) == 0);
  }
  CHECK(man.at("step").get<long>() == cfg.steps);
  CHECK(man.at("dataset").at("pde").get<std::string>() == "darcy");
  CHECK(man.at("dataset").at("count").get<long>() == 160);
  std::filesystem::remove_all(dir);

  // the trained sampler produces finite fields shaped like the data
  const auto traj = pirf::heun_sample(den, NoiseSchedule::edm(20), 9, true, &ds.grid);
  CHECK(traj.sample().all_finite());
  CHECK(traj.sample().grid.same_shape(ds.grid));
}

TEST_CASE("ema parameters after one step match the closed form") {
  const auto ds = pirf::build_dataset(Pde::darcy, 6, 24, 3);

  TrainConfig cfg;
  cfg.arch.widths = {4, 6};
  cfg.arch.emb_dim = 4;
  cfg.steps = 1;
  cfg.batch = 2;

  DenoiserConfig expect_arch = cfg.arch;
  expect_arch.data_channels = ds.channels();
  expect_arch.rows = ds.grid.plane_rows();
  expect_arch.cols = ds.grid.plane_cols();
  const auto init = Denoiser<float>::make(expect_arch);

  Denoiser<float> den;
  pirf::train_base(ds, cfg, den);

  // cast each coefficient from double exactly as the update does
  const double beta = pirf::ema_beta(cfg.ema_half_life);
  for (size_t i = 0; i < den.params.tensors.size(); ++i) {
    const auto& t = den.params.tensors[i];
    pirf::Vector<float> want =
        float(beta) * init.params.tensors[i].value + float(1.0 - beta) * t.value;
    CHECK(std::memcmp(t.ema.data(), want.data(), sizeof(float) * t.size()) == 0);
  }
}

TEST_CASE("training aborts on divergence and surfaces loss errors") {
  const auto ds = pirf::build_dataset(Pde::darcy, 6, 24, 3);

  TrainConfig cfg;
  cfg.arch.widths = {4, 6};
  cfg.arch.emb_dim = 4;
  cfg.batch = 1;
  cfg.seed = 5;

  // a constant huge extra objective from step 150 on trips the 1000-step rule
  cfg.steps = 1300;
  Denoiser<float> den;
  int calls = 0;
  pirf::DenoisedLossHook<float> spike = [&calls](const Field<float>&, float,
                                                 Field<float>&) -> double {
    return ++calls > 150 ? 1e6 : 0.0;
  };
  CHECK_THROWS_WITH_AS(pirf::train_base(ds, cfg, den, spike),
                       doctest::Contains("diverged at step"), pirf::Error);

  // a non-finite loss reports the step and the run seed
  cfg.steps = 3;
  pirf::DenoisedLossHook<float> poison = [](const Field<float>&, float, Field<float>&) -> double {
    return std::numeric_limits<double>::quiet_NaN();
  };
  try {
    pirf::train_base(ds, cfg, den, poison);
    CHECK(false);
  } catch (const pirf::Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 0") != std::string::npos);
    CHECK(msg.find("seed 5") != std::string::npos);
    CHECK(msg.find("non-finite") != std::string::npos);
  }
}
