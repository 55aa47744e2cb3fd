#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pirf/grf.hpp"
#include "pirf/residual.hpp"
#include "pirf/rng.hpp"
#include "pirf/solve.hpp"

namespace pirf {

// Per-channel affine statistics over a whole dataset. Data on disk stays in
// physical units; consumers normalize at load time and map model output back
// with denormalize.
struct Normalization {
  std::vector<double> mean, stdev;

  int channels() const { return static_cast<int>(mean.size()); }

  template <class S>
  void normalize(Field<S>& f) const {
    require(f.channels() == channels(), "Normalization: channel count mismatch");
    for (int c = 0; c < f.channels(); ++c)
      f.ch[c] = (f.ch[c] - S(mean[c])) / S(std::max(stdev[c], 1e-12));
  }
  template <class S>
  void denormalize(Field<S>& f) const {
    require(f.channels() == channels(), "Normalization: channel count mismatch");
    for (int c = 0; c < f.channels(); ++c)
      f.ch[c] = f.ch[c] * S(std::max(stdev[c], 1e-12)) + S(mean[c]);
  }
};

// Solver and sampling knobs that the build contract leaves free. Defaults are
// the reference configuration; everything lands in the stored provenance.
struct BuildOptions {
  double darcy_forcing = 1.0;
  double helmholtz_k = 1.0;  // poisson always solves with k = 0
  double burgers_nu = 0.01;
  int burgers_substeps = 8;
  double kolmogorov_reynolds = 1000.0;
  double kolmogorov_dt = 1.0 / 32.0;
  int kolmogorov_sim_factor = 4;  // simulation runs at factor * resolution
  int kolmogorov_substeps = 4;
  int frames_per_sequence = 320;
  int max_retries = 3;          // fresh-seed retries per sample before giving up
  double residual_bound = 0.0;  // 0 picks the per-pde default
};

// Sample layout conventions, shared by generation and loading:
//   burgers:     1 channel, rows = time frames (= resolution), cols = space,
//                periodic length 1, frame spacing 1/resolution
//   darcy:       2 channels [a, u] on the closed unit square
//   helmholtz:   2 channels [a, u] on the closed unit square (poisson: k = 0)
//   kolmogorov:  3 channels [u(t-dt), u(t), u(t+dt)] on the (2 pi)^2 torus
inline GridSpec dataset_grid(Pde pde, int resolution) {
  GridSpec g;
  switch (pde) {
    case Pde::burgers:
      g.spatial_dims = 1;
      g.resolution = {resolution};
      g.domain_length = {1.0};
      g.boundary = Boundary::periodic;
      g.has_time_axis = true;
      g.time_frames = resolution;
      g.dt = 1.0 / resolution;
      break;
    case Pde::darcy:
    case Pde::helmholtz:
    case Pde::poisson:
      g.spatial_dims = 2;
      g.resolution = {resolution, resolution};
      g.domain_length = {1.0, 1.0};
      g.boundary = Boundary::wall;
      break;
    case Pde::kolmogorov:
      g.spatial_dims = 2;
      g.resolution = {resolution, resolution};
      g.domain_length = {2 * std::numbers::pi, 2 * std::numbers::pi};
      g.boundary = Boundary::periodic;
      break;
  }
  g.validate();
  return g;
}

namespace detail {

// Sanity net for stored samples: generous multiples of the expected residual
// scale at reference resolution, tight enough to catch quiet solver garbage.
inline double default_residual_bound(Pde pde) {
  switch (pde) {
    case Pde::burgers: return 1.0;
    case Pde::darcy: return 200.0;
    case Pde::helmholtz:
    case Pde::poisson: return 50.0;
    case Pde::kolmogorov: return 1e3;
  }
  return 0.0;
}

}  // namespace detail

struct Dataset {
  Pde pde = Pde::darcy;
  GridSpec grid;
  double frame_dt = 0.0;  // kolmogorov window spacing; 0 for the others
  std::vector<Field<float>> samples;  // physical units
  Normalization norm;
  nlohmann::json provenance;  // solver params, seeds, residual record

  long count() const { return static_cast<long>(samples.size()); }
  int channels() const { return samples.empty() ? 0 : samples.front().channels(); }

  // Residual operator matching the stored solver configuration.
  ResidualOperator residual_op() const {
    ResidualOperator op = ResidualOperator::make(pde);
    if (provenance.contains("solver")) {
      const auto& s = provenance["solver"];
      if (s.contains("nu")) op.nu = s["nu"].get<double>();
      if (s.contains("forcing")) op.forcing = s["forcing"].get<double>();
      if (s.contains("k")) op.k = s["k"].get<double>();
      if (s.contains("reynolds")) op.reynolds = s["reynolds"].get<double>();
    }
    if (pde == Pde::kolmogorov) op.dt = frame_dt;
    return op;
  }
};

namespace detail {

inline Normalization compute_normalization(const std::vector<Field<float>>& samples) {
  require(!samples.empty(), "dataset: cannot normalize an empty dataset");
  const int nc = samples.front().channels();
  Normalization norm;
  norm.mean.assign(nc, 0.0);
  norm.stdev.assign(nc, 0.0);
  std::vector<double> sum(nc, 0.0), sumsq(nc, 0.0);
  for (const auto& f : samples)
    for (int c = 0; c < nc; ++c) {
      const auto d = f.ch[c].template cast<double>();
      sum[c] += d.sum();
      sumsq[c] += d.square().sum();
    }
  const double n = double(samples.size()) * double(samples.front().grid.plane_size());
  for (int c = 0; c < nc; ++c) {
    norm.mean[c] = sum[c] / n;
    norm.stdev[c] = std::sqrt(std::max(sumsq[c] / n - norm.mean[c] * norm.mean[c], 0.0));
  }
  return norm;
}

// One static-PDE sample from one seed. Solvers run in double; the float cast
// happens here so every recorded statistic describes the stored bytes.
inline Field<float> static_sample(Pde pde, const GridSpec& grid, std::uint64_t seed,
                                  const BuildOptions& opt) {
  Rng rng(seed);
  const int n = grid.resolution[0];
  Field<double> f(grid, 2);
  if (pde == Pde::darcy) {
    const auto spec = GRFSpec::make(GrfTag::darcy_prior);
    f.ch[0] = threshold_permeability(sample_grf2<double>(spec, n, n, rng));
    f.ch[1] = solve_darcy(f.ch[0], opt.darcy_forcing);
  } else {
    const auto spec = GRFSpec::make(GrfTag::helmholtz_prior);
    f.ch[0] = sample_grf2<double>(spec, n, n, rng);
    f.ch[1] = solve_helmholtz(f.ch[0], pde == Pde::poisson ? 0.0 : opt.helmholtz_k);
  }
  return f.cast<float>();
}

inline Field<float> burgers_sample(const GridSpec& grid, std::uint64_t seed,
                                   const BuildOptions& opt) {
  Rng rng(seed);
  const auto spec = GRFSpec::make(GrfTag::burgers_prior);
  const Vector<double> u0 = sample_grf1<double>(spec, grid.resolution[0], rng);
  Field<double> f(grid, 1);
  f.ch[0] = solve_burgers(u0, grid.time_frames, grid.dt, opt.burgers_nu, opt.burgers_substeps);
  return f.cast<float>();
}

// One simulated vorticity sequence, downsampled to the dataset grid and cut
// into overlapping 3-frame windows.
inline std::vector<Field<float>> kolmogorov_sequence(const GridSpec& grid, std::uint64_t seed,
                                                     const BuildOptions& opt) {
  require(opt.frames_per_sequence >= 3, "dataset: kolmogorov needs >= 3 frames per sequence");
  const int out = grid.resolution[0];
  const int sim = opt.kolmogorov_sim_factor * out;
  Rng rng(seed);
  const auto spec = GRFSpec::make(GrfTag::kolmogorov_prior);
  const Array2<double> u0 = sample_grf2<double>(spec, sim, sim, rng);
  const auto seq = solve_kolmogorov(u0, opt.frames_per_sequence, opt.kolmogorov_dt,
                                    opt.kolmogorov_reynolds, opt.kolmogorov_substeps);
  std::vector<Array2<float>> frames(seq.size());
  for (size_t i = 0; i < seq.size(); ++i)
    frames[i] = spectral_truncate(seq[i], out, out).cast<float>();
  std::vector<Field<float>> windows;
  windows.reserve(seq.size() - 2);
  for (size_t f = 1; f + 1 < seq.size(); ++f) {
    Field<float> w(grid, 3);
    w.ch[0] = frames[f - 1];
    w.ch[1] = frames[f];
    w.ch[2] = frames[f + 1];
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace detail

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  static_assert(std::endian::native == std::endian::little,
                "on-disk format is little-endian float32");
  require(!ds.samples.empty(), "write_dataset: empty dataset");
  std::filesystem::create_directories(dir);

  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["byte_order"] = "little";
  meta["pde"] = to_string(ds.pde);
  meta["resolution"] = ds.grid.resolution[0];
  meta["channels"] = ds.channels();
  meta["count"] = ds.count();
  meta["plane_rows"] = ds.grid.plane_rows();
  meta["plane_cols"] = ds.grid.plane_cols();
  meta["dt"] = ds.pde == Pde::burgers ? ds.grid.dt : ds.frame_dt;
  meta["normalization"] = {{"mean", ds.norm.mean}, {"std", ds.norm.stdev}};
  for (auto& [key, value] : ds.provenance.items()) meta[key] = value;

  {
    std::ofstream out(dir / "meta.json", std::ios::binary);
    require(out.good(), "write_dataset: cannot open meta.json for writing");
    out << meta.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "data.f32", std::ios::binary);
    require(out.good(), "write_dataset: cannot open data.f32 for writing");
    std::vector<float> buf;
    for (const auto& f : ds.samples) {
      buf.resize(f.size());
      f.to_flat(buf.data());
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    require(out.good(), "write_dataset: short write to data.f32");
  }
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  static_assert(std::endian::native == std::endian::little,
                "on-disk format is little-endian float32");
  std::ifstream metain(dir / "meta.json");
  require(metain.good(), "read_dataset: missing meta.json in " + dir.string());
  nlohmann::json meta = nlohmann::json::parse(metain);
  require(meta.at("format_version").get<int>() == 1, "read_dataset: unknown format version");
  require(meta.at("byte_order").get<std::string>() == "little",
          "read_dataset: unsupported byte order");

  Dataset ds;
  ds.pde = pde_from_string(meta.at("pde").get<std::string>());
  ds.grid = dataset_grid(ds.pde, meta.at("resolution").get<int>());
  if (ds.pde == Pde::kolmogorov) ds.frame_dt = meta.at("dt").get<double>();
  const long count = meta.at("count").get<long>();
  const int channels = meta.at("channels").get<int>();
  require(meta.at("plane_rows").get<int>() == ds.grid.plane_rows() &&
              meta.at("plane_cols").get<int>() == ds.grid.plane_cols(),
          "read_dataset: stored plane shape disagrees with the layout convention");
  ds.norm.mean = meta.at("normalization").at("mean").get<std::vector<double>>();
  ds.norm.stdev = meta.at("normalization").at("std").get<std::vector<double>>();
  require(ds.norm.channels() == channels, "read_dataset: normalization channel mismatch");
  for (const char* key : {"solver", "seed", "source_seeds", "residual"})
    if (meta.contains(key)) ds.provenance[key] = meta[key];

  const auto file = dir / "data.f32";
  const long plane = ds.grid.plane_size();
  const std::uintmax_t want =
      std::uintmax_t(count) * channels * std::uintmax_t(plane) * sizeof(float);
  require(std::filesystem::file_size(file) == want,
          "read_dataset: data.f32 size disagrees with meta.json");
  std::ifstream in(file, std::ios::binary);
  require(in.good(), "read_dataset: cannot open data.f32");
  std::vector<float> buf(static_cast<size_t>(count) * channels * plane);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(want));
  require(in.gcount() == static_cast<std::streamsize>(want), "read_dataset: short read");

  ds.samples.reserve(count);
  const float* src = buf.data();
  for (long i = 0; i < count; ++i) {
    Field<float> f(ds.grid, channels);
    f.from_flat(src);
    src += f.size();
    ds.samples.push_back(std::move(f));
  }
  return ds;
}

// Generate, validate, normalize and (optionally) persist a dataset. For the
// static PDEs and Burgers, n counts samples; for Kolmogorov, n counts
// simulated sequences and the sample count is n * (frames_per_sequence - 2)
// overlapping 3-frame windows. Per-unit seeds derive from (seed, index), so
// the output is a pure function of the arguments. A sample whose solve fails
// or whose residual exceeds the sanity bound is regenerated from a fresh
// derived seed up to max_retries times before the failure surfaces. An empty
// out_dir keeps the dataset in memory only.
inline Dataset build_dataset(Pde pde, long n, int resolution, std::uint64_t seed,
                             const std::filesystem::path& out_dir = {},
                             const BuildOptions& opt = {}) {
  require(n >= 1, "build_dataset: need at least one sample");
  Dataset ds;
  ds.pde = pde;
  ds.grid = dataset_grid(pde, resolution);
  if (pde == Pde::kolmogorov) ds.frame_dt = opt.kolmogorov_dt;

  ResidualOperator op = ResidualOperator::make(pde);
  op.nu = opt.burgers_nu;
  op.forcing = opt.darcy_forcing;
  if (pde == Pde::helmholtz) op.k = opt.helmholtz_k;
  op.reynolds = opt.kolmogorov_reynolds;
  op.dt = opt.kolmogorov_dt;
  const double bound =
      opt.residual_bound > 0 ? opt.residual_bound : detail::default_residual_bound(pde);

  std::vector<std::uint64_t> source_seeds;
  double mean_mse = 0.0, max_mse = 0.0;
  long planes_done = 0;

  auto admit = [&](std::vector<Field<float>>&& made) {
    double worst = 0.0;
    for (const auto& f : made) {
      const double mse = residual_mean_square(op, f.template cast<double>());
      worst = std::max(worst, mse);
      mean_mse += mse;
    }
    require(worst <= bound, "build_dataset: residual sanity bound exceeded (" +
                                std::to_string(worst) + " > " + std::to_string(bound) + ")");
    max_mse = std::max(max_mse, worst);
    planes_done += static_cast<long>(made.size());
    for (auto& f : made) ds.samples.push_back(std::move(f));
  };

  for (long i = 0; i < n; ++i) {
    const std::uint64_t base = derive_seed(seed, static_cast<std::uint64_t>(i));
    for (int attempt = 0;; ++attempt) {
      const std::uint64_t s =
          attempt == 0 ? base : derive_seed(base, static_cast<std::uint64_t>(attempt));
      const double saved_mean = mean_mse;
      const long saved_planes = planes_done;
      const size_t saved_count = ds.samples.size();
      try {
        switch (pde) {
          case Pde::burgers: {
            std::vector<Field<float>> one;
            one.push_back(detail::burgers_sample(ds.grid, s, opt));
            admit(std::move(one));
            break;
          }
          case Pde::kolmogorov:
            admit(detail::kolmogorov_sequence(ds.grid, s, opt));
            break;
          default: {
            std::vector<Field<float>> one;
            one.push_back(detail::static_sample(pde, ds.grid, s, opt));
            admit(std::move(one));
            break;
          }
        }
        source_seeds.push_back(s);
        break;
      } catch (const Error& e) {
        mean_mse = saved_mean;
        planes_done = saved_planes;
        ds.samples.resize(saved_count);
        if (attempt >= opt.max_retries)
          fail("build_dataset: unit " + std::to_string(i) + " failed after " +
               std::to_string(attempt + 1) + " attempts: " + e.what());
      }
    }
  }
  mean_mse /= double(planes_done);
  ds.norm = detail::compute_normalization(ds.samples);

  nlohmann::json solver;
  switch (pde) {
    case Pde::burgers:
      solver = {{"nu", opt.burgers_nu}, {"substeps", opt.burgers_substeps}};
      break;
    case Pde::darcy:
      solver = {{"forcing", opt.darcy_forcing}};
      break;
    case Pde::helmholtz:
    case Pde::poisson:
      solver = {{"k", pde == Pde::poisson ? 0.0 : opt.helmholtz_k}};
      break;
    case Pde::kolmogorov:
      solver = {{"reynolds", opt.kolmogorov_reynolds},
                {"sim_resolution", opt.kolmogorov_sim_factor * resolution},
                {"substeps", opt.kolmogorov_substeps},
                {"sequences", n},
                {"frames_per_sequence", opt.frames_per_sequence}};
      break;
  }
  ds.provenance["solver"] = solver;
  ds.provenance["seed"] = seed;
  ds.provenance["source_seeds"] = source_seeds;
  ds.provenance["residual"] = {{"bound", bound}, {"mean_mse", mean_mse}, {"max_mse", max_mse}};

  if (!out_dir.empty()) write_dataset(ds, out_dir);
  return ds;
}

}  // namespace pirf
