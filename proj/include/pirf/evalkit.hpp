#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pirf/baselines.hpp"
#include "pirf/diffusion.hpp"

namespace pirf {

// ---- reports -----------------------------------------------------------------

// One benchmark row: a sampling method evaluated on one checkpoint at one
// step count. Counters are per trajectory; the run aborts if they drift
// between trajectories, so a single pair describes the whole row.
struct EvalReport {
  std::string method;   // unguided | dps | cocogen | pidm | pirf
  std::string pde;      // dataset tag, e.g. "darcy"
  int steps = 0;
  int n_samples = 0;
  double mse = 0;        // mean over samples of the per-sample residual MSE
  double std_error = 0;  // standard error of that mean
  long nrq = 0;          // reward queries per trajectory
  long nbm = 0;          // model backward passes per trajectory
  int n_guided = 0;           // guided step count (dps and cocogen)
  int corrections = 0;        // post-sampling ascent steps (cocogen)
  double guidance_scale = 0;  // scale the row was sampled with (dps and cocogen)
  std::uint64_t seed = 0;
  double wall_clock = 0;  // seconds for the whole row
};

// Machine-readable record with a fixed key order, one line per report in the
// emitted ndjson. wall_clock is the only field that varies between otherwise
// identical runs; rerun comparisons strip it.
inline nlohmann::ordered_json report_record(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["pde"] = r.pde;
  j["steps"] = r.steps;
  j["mse"] = r.mse;
  j["stderr"] = r.std_error;
  j["nrq"] = r.nrq;
  j["nbm"] = r.nbm;
  j["seed"] = r.seed;
  j["wall_clock"] = r.wall_clock;
  return j;
}

namespace detail {

inline std::pair<double, double> mean_and_stderr(const std::vector<double>& v) {
  require(!v.empty(), "mean_and_stderr: empty sample list");
  const double n = double(v.size());
  double sum = 0;
  for (double x : v) sum += x;
  const double mean = sum / n;
  if (v.size() == 1) return {mean, 0.0};
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace detail

// ---- residual MSE metric -----------------------------------------------------

// Scores physical-unit samples: per-sample mean squared residual, then mean
// and standard error over the list. Uses the same double-precision path as
// RewardOp, so for samples obtained by denormalizing model outputs the mean
// equals -mean(reward) exactly.
inline std::pair<double, double> residual_mse(const std::vector<Field<double>>& samples,
                                              const ResidualOperator& op) {
  require(!samples.empty(), "residual_mse: empty sample list");
  std::vector<double> per;
  per.reserve(samples.size());
  for (const auto& s : samples) per.push_back(residual_mean_square(op, s));
  return detail::mean_and_stderr(per);
}

// ---- benchmark ---------------------------------------------------------------

// "pidm" and "pirf" are plain unguided sampling on a fine-tuned checkpoint;
// the long spellings make that explicit at call sites that take strings.
inline std::string canonical_method(std::string m) {
  if (m == "pidm-checkpoint") return "pidm";
  if (m == "pirf-checkpoint") return "pirf";
  return m;
}

struct BenchmarkConfig {
  std::string method = "unguided";
  std::string pde;       // recorded in the report verbatim
  int steps = 20;
  int n = 256;           // desk-scale default; the full protocol uses 1600
  std::uint64_t seed = 0;
  GuidanceConfig guidance;       // dps ignores corrections; cocogen uses them
  std::string checkpoint_kind;   // "base" | "pidm" | "pirf"; empty skips the check

  void validate() const {
    const std::string m = canonical_method(method);
    require(m == "unguided" || m == "dps" || m == "cocogen" || m == "pidm" || m == "pirf",
            "benchmark: unknown method '" + method + "'");
    require(steps >= 1, "benchmark: steps must be >= 1");
    require(n >= 1, "benchmark: need at least one sample");
    if (!checkpoint_kind.empty()) {
      const std::string want = (m == "pidm" || m == "pirf") ? m : std::string("base");
      require(checkpoint_kind == want, "benchmark: method '" + m + "' expects a " + want +
                                           " checkpoint, got '" + checkpoint_kind + "'");
    }
  }
};

// Runs one benchmark row. Trajectory i draws its initial noise from
// derive_seed(cfg.seed, i) in every method, so x_T is shared per index across
// methods compared under the same suite seed. Evaluates the active weights;
// to score an averaged model, pass ema_snapshot(den).
template <class S, class RW>
EvalReport benchmark(Denoiser<S>& den, const RW& rw, const GridSpec& grid,
                     const BenchmarkConfig& cfg) {
  cfg.validate();
  const std::string method = canonical_method(cfg.method);
  const NoiseSchedule sched = NoiseSchedule::edm(cfg.steps);
  const auto t0 = std::chrono::steady_clock::now();

  EvalReport rep;
  rep.method = method;
  rep.pde = cfg.pde;
  rep.steps = cfg.steps;
  rep.n_samples = cfg.n;
  rep.seed = cfg.seed;
  if (method == "dps" || method == "cocogen") {
    rep.n_guided = int(std::lround(cfg.guidance.guided_fraction * cfg.steps));
    rep.guidance_scale = cfg.guidance.scale;
  }
  if (method == "cocogen") rep.corrections = cfg.guidance.corrections;

  std::vector<double> per;
  per.reserve(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    const std::uint64_t s = derive_seed(cfg.seed, i);
    Trajectory<S> traj;
    if (method == "dps") {
      GuidanceConfig g = cfg.guidance;
      g.corrections = 0;
      traj = guided_heun_sample<S>(den, sched, s, rw, g, grid);
    } else if (method == "cocogen") {
      traj = cocogen_sample<S>(den, sched, s, rw, cfg.guidance, grid);
    } else if (method == "pirf") {
      // reward fine-tuning optimizes the DDIM rollout, so that is what gets scored
      traj = ddim_rollout(den, sched, s, false, &grid);
    } else {
      traj = heun_sample(den, sched, s, false, &grid);
    }
    if (i == 0) {
      rep.nrq = traj.nrq;
      rep.nbm = traj.nbm;
    } else {
      require(traj.nrq == rep.nrq && traj.nbm == rep.nbm,
              "benchmark: counters drifted between trajectories");
    }
    per.push_back(-rw.reward(traj.sample()));
  }
  const auto [mean, se] = detail::mean_and_stderr(per);
  rep.mse = mean;
  rep.std_error = se;
  rep.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---- guidance scale search -----------------------------------------------

// Seven log-spaced guidance scales spanning 1e-3 .. 1e2.
inline std::vector<double> guidance_scale_grid() {
  std::vector<double> g(7);
  for (int k = 0; k < 7; ++k) g[k] = std::pow(10.0, -3.0 + 5.0 * double(k) / 6.0);
  return g;
}

// Grid search over the guidance scale; returns the best (lowest-mse) report.
// Ties keep the smaller scale.
template <class S, class RW>
EvalReport best_guidance(Denoiser<S>& den, const RW& rw, const GridSpec& grid,
                         BenchmarkConfig cfg,
                         const std::vector<double>& scales = guidance_scale_grid()) {
  require(!scales.empty(), "best_guidance: empty scale grid");
  EvalReport best;
  bool have = false;
  for (double a : scales) {
    cfg.guidance.scale = a;
    EvalReport r = benchmark(den, rw, grid, cfg);
    if (!have || r.mse < best.mse) {
      best = r;
      have = true;
    }
  }
  return best;
}

// ---- value approximation error -------------------------------------------

// Per-step distribution of |v(x_t) - r(x_0)| over deterministic DDIM
// trajectories, where v(x_t) = r(D(x_t, sigma_t)) is the one-shot value
// estimate and r(x_0) the realized reward of that same trajectory.
struct ValueErrorAnalysis {
  std::string tag;      // label used in emitted records and figure names
  int steps = 0;
  int n = 0;
  std::uint64_t seed = 0;
  std::vector<double> sigmas;               // noise level of the state estimated from
  std::vector<std::vector<double>> errors;  // errors[t][i], step t, trajectory i
};

// Interpolated quantiles (linear between order statistics).
inline std::vector<double> quantiles(std::vector<double> v, const std::vector<double>& qs) {
  require(!v.empty(), "quantiles: empty sample");
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  out.reserve(qs.size());
  for (double q : qs) {
    require(q >= 0 && q <= 1, "quantiles: q outside [0, 1]");
    const double pos = q * double(v.size() - 1);
    const std::size_t lo = std::size_t(pos);
    const double frac = pos - double(lo);
    out.push_back(lo + 1 < v.size() ? v[lo] * (1 - frac) + v[lo + 1] * frac : v[lo]);
  }
  return out;
}

// The final transition has DDIM coefficient 0, so x_0 equals the last
// denoised prediction and the final-step error is exactly zero; earlier
// steps measure how far the one-shot estimate sits from the rollout outcome.
template <class S, class RW>
ValueErrorAnalysis value_error_analysis(const Denoiser<S>& den, const RW& rw,
                                        const GridSpec& grid, int steps = 20, int n = 800,
                                        std::uint64_t seed = 0,
                                        const std::string& tag = "value_error") {
  require(steps >= 1, "value_error_analysis: steps must be >= 1");
  require(n >= 1, "value_error_analysis: need at least one trajectory");
  const NoiseSchedule sched = NoiseSchedule::edm(steps);

  ValueErrorAnalysis a;
  a.tag = tag;
  a.steps = steps;
  a.n = n;
  a.seed = seed;
  a.sigmas.assign(sched.sigma.begin(), sched.sigma.begin() + steps);
  a.errors.assign(steps, {});
  for (auto& row : a.errors) row.reserve(n);

  for (int i = 0; i < n; ++i) {
    const Trajectory<S> traj = ddim_rollout(den, sched, derive_seed(seed, i), false, &grid);
    const double r0 = rw.reward(traj.sample());
    for (int t = 0; t < steps; ++t) {
      const double v = value_estimate(den, rw, traj.states[t], sched.sigma[t]);
      a.errors[t].push_back(std::abs(v - r0));
    }
  }
  return a;
}

// ---- inference cost accounting ---------------------------------------------

// Closed forms per trajectory, N = guided step count, M = correction count:
//   unguided, pidm, pirf -> (0, 0);  dps -> (N, N);  cocogen -> (N + M, N).
struct CostRow {
  std::string method;
  int steps = 0;
  long nrq = 0, nbm = 0;
  long nrq_expected = 0, nbm_expected = 0;
  bool ok = false;
};

// Checks every report's measured counters against the closed forms. With
// enforce set (the default) any mismatch throws: this is the assertion, and
// callers surface it as a nonzero exit.
inline std::vector<CostRow> cost_accounting(const std::vector<EvalReport>& reports,
                                            bool enforce = true) {
  std::vector<CostRow> rows;
  rows.reserve(reports.size());
  std::string bad;
  for (const auto& r : reports) {
    CostRow row;
    row.method = r.method;
    row.steps = r.steps;
    row.nrq = r.nrq;
    row.nbm = r.nbm;
    if (r.method == "dps") {
      row.nrq_expected = r.n_guided;
      row.nbm_expected = r.n_guided;
    } else if (r.method == "cocogen") {
      row.nrq_expected = r.n_guided + r.corrections;
      row.nbm_expected = r.n_guided;
    } else if (r.method == "unguided" || r.method == "pidm" || r.method == "pirf") {
      row.nrq_expected = 0;
      row.nbm_expected = 0;
    } else {
      fail("cost_accounting: unknown method '" + r.method + "'");
    }
    row.ok = row.nrq == row.nrq_expected && row.nbm == row.nbm_expected;
    if (!row.ok)
      bad += " [" + row.method + " @ " + std::to_string(row.steps) + " steps: expected (" +
             std::to_string(row.nrq_expected) + ", " + std::to_string(row.nbm_expected) +
             "), got (" + std::to_string(row.nrq) + ", " + std::to_string(row.nbm) + ")]";
    rows.push_back(row);
  }
  if (enforce && !bad.empty()) fail("cost_accounting: counter mismatch" + bad);
  return rows;
}

// ---- emission ----------------------------------------------------------------

namespace detail {

inline std::string fmt_g(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

inline void write_text_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(content.data(), std::streamsize(content.size()));
  require(f.good(), "emit_figures: cannot write " + p.string());
}

inline std::string sanitize_tag(const std::string& tag) {
  std::string out;
  for (char c : tag)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

// Column-aligned text table mirroring the benchmark rows.
inline std::string report_table(const std::vector<EvalReport>& reports) {
  if (reports.empty()) return "";
  const std::vector<std::string> head = {"method", "pde",    "steps", "n",   "mse",
                                         "stderr", "nrq",    "nbm",   "seed"};
  std::vector<std::vector<std::string>> cells;
  cells.push_back(head);
  for (const auto& r : reports)
    cells.push_back({r.method, r.pde, std::to_string(r.steps),
                     r.n_samples > 0 ? std::to_string(r.n_samples) : std::string("-"),
                     fmt_g(r.mse), fmt_g(r.std_error), std::to_string(r.nrq),
                     std::to_string(r.nbm), std::to_string(r.seed)});
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      if (c + 1 < row.size()) out += std::string(width[c] - row[c].size() + 2, ' ');
    }
    out += "\n";
  }
  return out;
}

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> p = {"#4c78a8", "#f58518", "#54a24b", "#e45756",
                                             "#72b7b2", "#b279a2", "#9d755d"};
  return p;
}

inline double log_floor(double v) { return std::log10(std::max(v, 1e-16)); }

struct SvgCanvas {
  std::string body;
  int w = 0, h = 0;

  SvgCanvas(int width, int height) : w(width), h(height) {
    body += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
            "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
            std::to_string(h) + "\" font-family=\"Helvetica, Arial, sans-serif\">\n";
    body += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(w) + "\" height=\"" +
            std::to_string(h) + "\" fill=\"#ffffff\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double sw = 1) {
    body += "<line x1=\"" + fmt_g(x1) + "\" y1=\"" + fmt_g(y1) + "\" x2=\"" + fmt_g(x2) +
            "\" y2=\"" + fmt_g(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" + fmt_g(sw) +
            "\"/>\n";
  }
  void rect(double x, double y, double w_, double h_, const std::string& fill,
            const std::string& stroke) {
    body += "<rect x=\"" + fmt_g(x) + "\" y=\"" + fmt_g(y) + "\" width=\"" + fmt_g(w_) +
            "\" height=\"" + fmt_g(h_) + "\" fill=\"" + fill + "\" stroke=\"" + stroke + "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 11,
            const std::string& anchor = "start", const std::string& extra = "") {
    body += "<text x=\"" + fmt_g(x) + "\" y=\"" + fmt_g(y) + "\" font-size=\"" +
            std::to_string(size) + "\" text-anchor=\"" + anchor + "\"" +
            (extra.empty() ? "" : " " + extra) + ">" + s + "</text>\n";
  }
  std::string finish() const { return body + "</svg>\n"; }
};

// Axis helper: integer decade ticks spanning the data on a log10 axis.
struct LogAxis {
  double lo = 0, hi = 1;
  double top = 0, bottom = 0;  // pixel range, top < bottom

  LogAxis(double dlo, double dhi, double px_top, double px_bottom)
      : top(px_top), bottom(px_bottom) {
    lo = std::floor(dlo);
    hi = std::ceil(dhi);
    if (hi - lo < 1) hi = lo + 1;
  }
  double y(double logv) const { return top + (hi - logv) / (hi - lo) * (bottom - top); }
  int tick_step() const { return std::max(1, int(std::lround((hi - lo) / 6.0))); }
};

inline std::string value_error_svg(const ValueErrorAnalysis& a) {
  const int W = 940, H = 430, L = 76, R = 18, T = 36, B = 52;
  double dlo = std::numeric_limits<double>::infinity(), dhi = -dlo;
  for (const auto& row : a.errors)
    for (double e : row) {
      const double le = log_floor(e);
      dlo = std::min(dlo, le);
      dhi = std::max(dhi, le);
    }
  if (!std::isfinite(dlo)) {
    dlo = -16;
    dhi = 0;
  }
  LogAxis ax(dlo, dhi, T, H - B);

  SvgCanvas svg(W, H);
  svg.text(W / 2.0, 20, sanitize_tag(a.tag) + ": value estimate error by sampling step", 13,
           "middle");
  for (double k = ax.lo; k <= ax.hi + 1e-9; k += ax.tick_step()) {
    svg.line(L, ax.y(k), W - R, ax.y(k), "#dddddd");
    svg.text(L - 6, ax.y(k) + 4, "1e" + std::to_string(int(std::lround(k))), 10, "end");
  }
  const double dx = double(W - L - R) / double(a.steps);
  const int label_every = std::max(1, (a.steps + 19) / 20);
  for (int t = 0; t < a.steps; ++t) {
    const auto q = quantiles(a.errors[t], {0.05, 0.25, 0.5, 0.75, 0.95});
    const double cx = L + (t + 0.5) * dx;
    const double bw = 0.6 * dx;
    svg.line(cx, ax.y(log_floor(q[0])), cx, ax.y(log_floor(q[4])), "#555555");
    svg.rect(cx - bw / 2, ax.y(log_floor(q[3])),
             bw, ax.y(log_floor(q[1])) - ax.y(log_floor(q[3])), "#9ecae1", "#3182bd");
    svg.line(cx - bw / 2, ax.y(log_floor(q[2])), cx + bw / 2, ax.y(log_floor(q[2])), "#08519c",
             1.5);
    if (t % label_every == 0)
      svg.text(cx, H - B + 16, std::to_string(t), 10, "middle");
  }
  svg.line(L, H - B, W - R, H - B, "#333333");
  svg.line(L, T, L, H - B, "#333333");
  svg.text(W / 2.0, H - 10, "sampling step (noise decreasing to the right)", 11, "middle");
  svg.text(14, T - 10, "|v(x_t) - r(x_0)|, log scale", 11);
  return svg.finish();
}

inline std::string benchmark_svg(const std::vector<EvalReport>& reports) {
  // bars grouped by step count, input order within a group
  std::vector<int> steps;
  for (const auto& r : reports)
    if (std::find(steps.begin(), steps.end(), r.steps) == steps.end()) steps.push_back(r.steps);
  std::sort(steps.begin(), steps.end());

  std::vector<std::string> methods;
  auto color_of = [&](const std::string& m) {
    auto it = std::find(methods.begin(), methods.end(), m);
    if (it == methods.end()) {
      methods.push_back(m);
      it = methods.end() - 1;
    }
    return palette()[std::size_t(it - methods.begin()) % palette().size()];
  };

  const int bw = 34, gap = 30, L = 76, R = 18, T = 36, B = 64;
  int nbars = int(reports.size());
  const int W = L + R + nbars * bw + int(steps.size()) * gap;
  const int H = 400;

  double dlo = std::numeric_limits<double>::infinity(), dhi = -dlo;
  for (const auto& r : reports) {
    dlo = std::min(dlo, log_floor(r.mse));
    dhi = std::max(dhi, log_floor(r.mse + r.std_error));
  }
  if (!std::isfinite(dlo)) {
    dlo = -16;
    dhi = 0;
  }
  LogAxis ax(dlo, dhi, T, H - B);

  SvgCanvas svg(W, H);
  svg.text(W / 2.0, 20, "residual MSE by method and step count", 13, "middle");
  for (double k = ax.lo; k <= ax.hi + 1e-9; k += ax.tick_step()) {
    svg.line(L, ax.y(k), W - R, ax.y(k), "#dddddd");
    svg.text(L - 6, ax.y(k) + 4, "1e" + std::to_string(int(std::lround(k))), 10, "end");
  }
  double x = L;
  for (int sc : steps) {
    const double group_x0 = x;
    for (const auto& r : reports) {
      if (r.steps != sc) continue;
      const double y = ax.y(log_floor(r.mse));
      svg.rect(x + 3, y, bw - 6, (H - B) - y, color_of(r.method), "none");
      if (r.std_error > 0)
        svg.line(x + bw / 2.0, ax.y(log_floor(r.mse + r.std_error)), x + bw / 2.0,
                 ax.y(log_floor(std::max(r.mse - r.std_error, 1e-300))), "#333333");
      svg.text(x + bw / 2.0, H - B + 13, r.method, 9, "middle");
      x += bw;
    }
    svg.text((group_x0 + x) / 2.0, H - B + 30, "T = " + std::to_string(sc), 11, "middle");
    x += gap;
  }
  svg.line(L, H - B, W - R, H - B, "#333333");
  svg.line(L, T, L, H - B, "#333333");
  svg.text(14, T - 10, "residual MSE, log scale", 11);
  return svg.finish();
}

}  // namespace detail

// Writes machine-readable results and static figures:
//   <out_dir>/results/benchmark.ndjson   one fixed-key record per report
//   <out_dir>/results/table.txt          aligned text table (empty if no reports)
//   <out_dir>/results/value_error.ndjson per-step quantile records (if analyses given)
//   <out_dir>/figures/benchmark.svg      bar chart (skipped when no reports)
//   <out_dir>/figures/value_error_<tag>.svg box plot per analysis
// Output bytes depend only on the inputs, so reruns are byte-identical.
// Returns the written paths.
inline std::vector<std::string> emit_figures(const std::vector<EvalReport>& reports,
                                             const std::vector<ValueErrorAnalysis>& analyses,
                                             const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path results = fs::path(out_dir) / "results";
  const fs::path figures = fs::path(out_dir) / "figures";
  std::error_code ec;
  fs::create_directories(results, ec);
  require(!ec, "emit_figures: cannot create " + results.string());
  std::vector<std::string> written;

  std::string nd;
  for (const auto& r : reports) nd += report_record(r).dump() + "\n";
  detail::write_text_file(results / "benchmark.ndjson", nd);
  written.push_back((results / "benchmark.ndjson").string());

  detail::write_text_file(results / "table.txt", detail::report_table(reports));
  written.push_back((results / "table.txt").string());

  if (!analyses.empty()) {
    std::string vd;
    for (const auto& a : analyses) {
      for (int t = 0; t < a.steps; ++t) {
        const auto q = quantiles(a.errors[t], {0.05, 0.25, 0.5, 0.75, 0.95});
        nlohmann::ordered_json j;
        j["tag"] = a.tag;
        j["step"] = t;
        j["sigma"] = a.sigmas[t];
        j["n"] = int(a.errors[t].size());
        j["q05"] = q[0];
        j["q25"] = q[1];
        j["q50"] = q[2];
        j["q75"] = q[3];
        j["q95"] = q[4];
        vd += j.dump() + "\n";
      }
    }
    detail::write_text_file(results / "value_error.ndjson", vd);
    written.push_back((results / "value_error.ndjson").string());
  }

  if (!reports.empty() || !analyses.empty()) {
    fs::create_directories(figures, ec);
    require(!ec, "emit_figures: cannot create " + figures.string());
  }
  if (!reports.empty()) {
    detail::write_text_file(figures / "benchmark.svg", detail::benchmark_svg(reports));
    written.push_back((figures / "benchmark.svg").string());
  }
  for (std::size_t i = 0; i < analyses.size(); ++i) {
    const std::string tag = analyses[i].tag.empty() ? std::to_string(i)
                                                    : detail::sanitize_tag(analyses[i].tag);
    const fs::path p = figures / ("value_error_" + tag + ".svg");
    detail::write_text_file(p, detail::value_error_svg(analyses[i]));
    written.push_back(p.string());
  }
  return written;
}

}  // namespace pirf
