#include "pirf/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pirf/baselines.hpp"
#include "pirf/dataset.hpp"
#include "pirf/diffusion.hpp"
#include "pirf/evalkit.hpp"
#include "pirf/image.hpp"
#include "pirf/pirf.hpp"
#include "pirf/rng.hpp"
#include "pirf/runcfg.hpp"

namespace pirf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Registers options whose values land in the run configuration only when the
// flag was actually given, so precedence is flags > config file > defaults.
class Binder {
 public:
  template <class T>
  void opt(CLI::App* cmd, const std::string& names, T& target, const std::string& desc,
           bool csv = false) {
    auto hold = std::make_shared<T>();
    CLI::Option* o = cmd->add_option(names, *hold, desc);
    if (csv) o->delimiter(',');
    apply_.push_back([o, hold, &target] {
      if (o->count()) target = *hold;
    });
  }

  void flag(CLI::App* cmd, const std::string& names, bool& target, const std::string& desc) {
    auto hold = std::make_shared<bool>(false);
    CLI::Option* o = cmd->add_flag(names, *hold, desc);
    apply_.push_back([o, hold, &target] {
      if (o->count()) target = *hold;
    });
  }

  void apply() const {
    for (const auto& f : apply_) f();
  }

 private:
  std::vector<std::function<void()>> apply_;
};

void write_json_file(const fs::path& p, const json& j) {
  std::ofstream f(p, std::ios::binary);
  require(f.good(), "cannot write " + p.string());
  f << j.dump(2) << "\n";
  require(f.good(), "short write to " + p.string());
}

void persist_config(const fs::path& dir, const RunConfig& cfg) {
  std::ofstream f(dir / "config.json", std::ios::binary);
  require(f.good(), "cannot write " + (dir / "config.json").string());
  f << cfg.to_json().dump(2) << "\n";
}

// --run-dir pins the output directory; otherwise a fresh hash+timestamp
// directory is created under the runs root. Either way the resolved config
// is persisted inside as config.json.
fs::path resolve_run_dir(const std::string& flag, const std::string& command,
                         const RunConfig& cfg) {
  if (flag.empty()) return make_run_dir(command, cfg);
  const fs::path dir(flag);
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, "cannot create run directory " + dir.string());
  persist_config(dir, cfg);
  return dir;
}

// Dataset provenance stored in checkpoint manifests; enough to rebuild the
// residual reward and the sampling grid without touching the dataset again.
json dataset_provenance(const Dataset& ds, const RunConfig::Dataset& dcfg) {
  json j;
  j["pde"] = to_string(ds.pde);
  j["resolution"] = dcfg.resolution;
  j["frame_dt"] = ds.frame_dt;
  if (ds.provenance.contains("solver")) j["solver"] = ds.provenance["solver"];
  j["norm"] = {{"mean", ds.norm.mean}, {"stdev", ds.norm.stdev}};
  j["dataset"] = {{"pde", dcfg.pde},
                  {"n", dcfg.n},
                  {"resolution", dcfg.resolution},
                  {"seed", dcfg.seed}};
  return j;
}

RewardOp reward_from_manifest(const json& man) {
  require(man.contains("pde") && man.contains("norm") && man.contains("resolution"),
          "checkpoint manifest lacks dataset provenance (pde, resolution, norm)");
  const Pde pde = pde_from_string(man.at("pde").get<std::string>());
  ResidualOperator op = ResidualOperator::make(pde);
  if (man.contains("solver")) {
    const auto& s = man.at("solver");
    if (s.contains("nu")) op.nu = s.at("nu").get<double>();
    if (s.contains("forcing")) op.forcing = s.at("forcing").get<double>();
    if (s.contains("k")) op.k = s.at("k").get<double>();
    if (s.contains("reynolds")) op.reynolds = s.at("reynolds").get<double>();
  }
  if (pde == Pde::kolmogorov) op.dt = man.at("frame_dt").get<double>();
  Normalization norm;
  man.at("norm").at("mean").get_to(norm.mean);
  man.at("norm").at("stdev").get_to(norm.stdev);
  return RewardOp{op, norm};
}

GridSpec grid_from_manifest(const json& man) {
  return dataset_grid(pde_from_string(man.at("pde").get<std::string>()),
                      man.at("resolution").get<int>());
}

Denoiser<float> load_model(const std::string& path, const char* which, json& man) {
  if (path.empty()) throw ConfigError(std::string("config: ") + which + " is required");
  return load_checkpoint<float>(path, &man);
}

// "dec.hi" names the highest-resolution decoder group without knowing the
// plane shape; everything else must match a real parameter group.
std::vector<std::string> resolve_layer_groups(const std::vector<std::string>& names,
                                              const Denoiser<float>& den) {
  const std::vector<std::string> known = den.params.groups();
  std::vector<std::string> resolved;
  resolved.reserve(names.size());
  for (std::string g : names) {
    if (g == "dec.hi") g = den.cfg.highest_res_dec_group();
    if (std::find(known.begin(), known.end(), g) == known.end())
      throw ConfigError("finetune: unknown layer group '" + g + "'");
    resolved.push_back(g);
  }
  return resolved;
}

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir, std::ostream& out,
                 std::ostream& err) {
  if (out_dir.empty()) throw ConfigError("gen-data: --out is required");
  const Pde pde = pde_from_string(cfg.dataset.pde);
  err << "generating " << cfg.dataset.n << " " << cfg.dataset.pde << " samples at resolution "
      << cfg.dataset.resolution << std::endl;
  const Dataset ds =
      build_dataset(pde, cfg.dataset.n, cfg.dataset.resolution, cfg.dataset.seed, out_dir);
  persist_config(out_dir, cfg);
  out << "dataset " << out_dir << "\n";
  out << "samples " << ds.count() << " channels " << ds.channels() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& run_dir_flag, std::ostream& out,
              std::ostream& err) {
  const fs::path dir = resolve_run_dir(run_dir_flag, "train", cfg);
  const Pde pde = pde_from_string(cfg.dataset.pde);
  err << "building dataset: " << cfg.dataset.n << " " << cfg.dataset.pde << " at resolution "
      << cfg.dataset.resolution << std::endl;
  const Dataset ds = build_dataset(pde, cfg.dataset.n, cfg.dataset.resolution, cfg.dataset.seed);

  TrainConfig tc;
  tc.arch.widths = cfg.model.widths;
  tc.arch.emb_dim = cfg.model.emb_dim;
  tc.arch.block_kernel = cfg.model.block_kernel;
  tc.arch.init_seed = cfg.model.init_seed;
  tc.steps = cfg.train.steps;
  tc.batch = cfg.train.batch;
  tc.lr = cfg.train.lr;
  tc.ema_half_life = cfg.train.ema_half_life;
  tc.seed = cfg.train.seed;

  const bool pidm = cfg.train.pidm_gamma > 0;
  DenoisedLossHook<float> hook;
  if (pidm)
    hook = pidm_hook<float>(RewardOp::for_dataset(ds),
                            PidmConfig{cfg.train.pidm_gamma, cfg.train.pidm_snr_scaled});

  Denoiser<float> den;
  const TrainReport rep = train_base(ds, tc, den, hook, [&](long done, double loss) {
    err << "train step " << done << "/" << tc.steps << " loss " << loss << std::endl;
  });

  json extra = dataset_provenance(ds, cfg.dataset);
  extra["kind"] = pidm ? "pidm" : "base";
  extra["run_config"] = cfg.to_json();
  save_checkpoint(den, dir / "checkpoint", extra);

  json report;
  report["loss_curve"] = rep.loss_curve;
  report["initial_smoothed"] = rep.initial_smoothed;
  report["final_smoothed"] = rep.final_smoothed;
  report["steps"] = rep.steps;
  write_json_file(dir / "report.json", report);

  out << "run " << dir.string() << "\n";
  out << "checkpoint " << (dir / "checkpoint").string() << "\n";
  out << "kind " << (pidm ? "pidm" : "base") << "\n";
  out << "final smoothed loss " << rep.final_smoothed << "\n";
  return 0;
}

int cmd_finetune(const RunConfig& cfg, const std::string& run_dir_flag, std::ostream& out,
                 std::ostream& err) {
  json base_man;
  Denoiser<float> den = load_model(cfg.finetune.base, "finetune.base", base_man);
  const std::string base_kind = base_man.value("kind", std::string("base"));
  if (base_kind != "base")
    throw ConfigError("finetune: expected a base checkpoint, got kind '" + base_kind + "'");

  const RewardOp rw = reward_from_manifest(base_man);
  const GridSpec grid = grid_from_manifest(base_man);
  const std::uint64_t base_fp = params_fingerprint(den.params);

  FinetuneConfig fc;
  fc.steps = cfg.finetune.T;
  fc.truncate_last = cfg.finetune.K;
  fc.layer_groups = resolve_layer_groups(cfg.finetune.layer_groups, den);
  std::string reg = cfg.finetune.regularizer;
  for (char& c : reg)
    if (c == '-') c = '_';
  fc.reg = regularizer_from_string(reg);
  fc.lambda_weight = cfg.finetune.lambda_weight;
  fc.lambda_distill = cfg.finetune.lambda_distill;
  fc.ema_half_life = cfg.finetune.ema_half_life;
  fc.early_stop_patience = cfg.finetune.early_stop_patience;
  fc.max_updates = cfg.finetune.max_updates;
  fc.batch = cfg.finetune.batch;
  fc.lr = cfg.finetune.lr;
  fc.trajectories = cfg.finetune.trajectories;
  fc.clip_norm = cfg.finetune.clip_norm;
  fc.seed = cfg.finetune.seed;
  fc.eval_every = cfg.finetune.eval_every;
  fc.eval_samples = cfg.finetune.eval_samples;

  const fs::path dir = resolve_run_dir(run_dir_flag, "finetune", cfg);

  const FinetuneReport rep =
      finetune(den, rw, grid, fc,
               [&](long update, const Denoiser<float>&, const FinetuneReport& r) {
                 if (update == 1 || update % 50 == 0)
                   err << "finetune update " << update << " reward " << r.reward_mean.back()
                       << std::endl;
               });

  json extra;
  for (const char* k : {"pde", "resolution", "frame_dt", "solver", "norm", "dataset"})
    if (base_man.contains(k)) extra[k] = base_man[k];
  extra["kind"] = "pirf";
  extra["finetune"] = {{"base", cfg.finetune.base},
                       {"base_fingerprint", base_fp},
                       {"regularizer", rep.regularizer},
                       {"updates", rep.updates},
                       {"trajectories", rep.trajectories}};
  extra["run_config"] = cfg.to_json();
  save_checkpoint(den, dir / "checkpoint", extra);

  json report;
  report["base_reward"] = rep.base_reward;
  report["reward_mean"] = rep.reward_mean;
  report["reward_std"] = rep.reward_std;
  report["weight_drift"] = rep.weight_drift;
  report["heldout_mse"] = rep.heldout_mse;
  report["heldout_at"] = rep.heldout_at;
  report["updates"] = rep.updates;
  report["trajectories"] = rep.trajectories;
  report["skipped"] = rep.skipped;
  report["regularizer"] = rep.regularizer;
  report["seconds_per_1k"] = rep.seconds_per_1k;
  write_json_file(dir / "report.json", report);

  out << "run " << dir.string() << "\n";
  out << "checkpoint " << (dir / "checkpoint").string() << "\n";
  out << "updates " << rep.updates << " trajectories " << rep.trajectories << "\n";
  out << "reward " << rep.base_reward << " -> "
      << (rep.reward_mean.empty() ? rep.base_reward : rep.reward_mean.back()) << "\n";
  if (!rep.heldout_mse.empty()) out << "heldout mse " << rep.heldout_mse.back() << "\n";
  return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& run_dir_flag, std::ostream& out,
               std::ostream& err) {
  json man;
  Denoiser<float> den = load_model(cfg.sample.checkpoint, "sample.checkpoint", man);
  const std::string kind = man.value("kind", std::string("base"));
  if (cfg.sample.use_ema) den = ema_snapshot(den);
  std::string sampler = cfg.sample.sampler;
  if (sampler.empty()) sampler = kind == "pirf" ? "ddim" : "heun";

  const RewardOp rw = reward_from_manifest(man);
  const GridSpec grid = grid_from_manifest(man);
  const NoiseSchedule sched = NoiseSchedule::edm(cfg.sample.steps);

  const fs::path dir = resolve_run_dir(run_dir_flag, "sample", cfg);
  const fs::path samples_dir = dir / "samples";
  std::error_code ec;
  fs::create_directories(samples_dir, ec);
  require(!ec, "cannot create " + samples_dir.string());

  std::vector<Field<float>> phys;
  std::vector<Field<double>> phys_d;
  phys.reserve(size_t(cfg.sample.n));
  for (int i = 0; i < cfg.sample.n; ++i) {
    const std::uint64_t seed = derive_seed(cfg.sample.seed, std::uint64_t(i));
    const Trajectory<float> traj = sampler == "ddim"
                                       ? ddim_rollout(den, sched, seed, false, &grid)
                                       : heun_sample(den, sched, seed, false, &grid);
    Field<float> x0 = traj.sample();
    rw.norm.denormalize(x0);
    phys_d.push_back(x0.cast<double>());
    phys.push_back(std::move(x0));
    err << "sample " << (i + 1) << "/" << cfg.sample.n << std::endl;
  }

  {
    std::ofstream f(samples_dir / "x0.f32", std::ios::binary);
    require(f.good(), "cannot write " + (samples_dir / "x0.f32").string());
    std::vector<float> buf;
    for (const auto& s : phys) {
      buf.resize(size_t(s.size()));
      s.to_flat(buf.data());
      f.write(reinterpret_cast<const char*>(buf.data()),
              std::streamsize(buf.size() * sizeof(float)));
    }
    require(f.good(), "short write to x0.f32");
  }

  json meta;
  meta["pde"] = man.at("pde");
  meta["kind"] = kind;
  meta["sampler"] = sampler;
  meta["steps"] = cfg.sample.steps;
  meta["n"] = cfg.sample.n;
  meta["seed"] = cfg.sample.seed;
  meta["channels"] = phys.front().channels();
  meta["plane_rows"] = grid.plane_rows();
  meta["plane_cols"] = grid.plane_cols();
  meta["layout"] = "sample-major C order: channel, then row, then column; float32";
  write_json_file(samples_dir / "meta.json", meta);

  const int tiles = int(std::ceil(std::sqrt(double(cfg.sample.n))));
  for (int c = 0; c < phys.front().channels(); ++c)
    save_sample_grid(samples_dir / ("grid_ch" + std::to_string(c) + ".png"), phys, c, tiles);

  const auto [mse, se] = residual_mse(phys_d, rw.op);
  out << "run " << dir.string() << "\n";
  out << "sampler " << sampler << " steps " << cfg.sample.steps << " n " << cfg.sample.n << "\n";
  out << "residual mse " << mse << " stderr " << se << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& run_dir_flag, std::ostream& out,
             std::ostream& err) {
  json man;
  Denoiser<float> den = load_model(cfg.eval.checkpoint, "eval.checkpoint", man);
  const std::string kind = man.value("kind", std::string("base"));
  if (cfg.eval.use_ema) den = ema_snapshot(den);
  const RewardOp rw = reward_from_manifest(man);
  const GridSpec grid = grid_from_manifest(man);

  std::vector<std::string> methods;
  methods.reserve(cfg.eval.methods.size());
  for (const auto& m : cfg.eval.methods) methods.push_back(canonical_method(m));
  if (methods.empty()) {
    if (kind == "pidm") methods = {"pidm"};
    else if (kind == "pirf") methods = {"pirf"};
    else methods = {"unguided", "dps", "cocogen"};
  }

  const fs::path dir = resolve_run_dir(run_dir_flag, "eval", cfg);

  std::vector<EvalReport> reports;
  for (int steps : cfg.eval.steps)
    for (const auto& m : methods) {
      BenchmarkConfig bc;
      bc.method = m;
      bc.pde = man.at("pde").get<std::string>();
      bc.steps = steps;
      bc.n = cfg.eval.n;
      bc.seed = cfg.eval.seed;
      bc.guidance.scale = cfg.baselines.guidance_scale;
      bc.guidance.guided_fraction = cfg.baselines.guided_fraction;
      bc.guidance.corrections = cfg.baselines.corrections;
      bc.guidance.correction_step = cfg.baselines.correction_step;
      bc.checkpoint_kind = kind;
      err << "eval " << m << " at " << steps << " steps" << std::endl;
      reports.push_back(benchmark(den, rw, grid, bc));
    }

  cost_accounting(reports);
  emit_figures(reports, {}, dir.string());
  out << "run " << dir.string() << "\n";
  out << detail::report_table(reports);
  return 0;
}

int cmd_value_error(const RunConfig& cfg, const std::string& run_dir_flag, std::ostream& out,
                    std::ostream& err) {
  json man;
  Denoiser<float> den = load_model(cfg.value_error.checkpoint, "value_error.checkpoint", man);
  if (cfg.value_error.use_ema) den = ema_snapshot(den);
  const RewardOp rw = reward_from_manifest(man);
  const GridSpec grid = grid_from_manifest(man);

  const fs::path dir = resolve_run_dir(run_dir_flag, "value-error", cfg);
  err << "value error over " << cfg.value_error.n << " trajectories at " << cfg.value_error.steps
      << " steps" << std::endl;
  const ValueErrorAnalysis a = value_error_analysis(den, rw, grid, cfg.value_error.steps,
                                                    cfg.value_error.n, cfg.value_error.seed);
  emit_figures({}, {a}, dir.string());

  const double med_first = quantiles(a.errors.front(), {0.5})[0];
  const double med_last = quantiles(a.errors.back(), {0.5})[0];
  long better = 0;
  for (size_t i = 0; i < a.errors.front().size(); ++i)
    if (a.errors.front()[i] > a.errors.back()[i]) ++better;
  out << "run " << dir.string() << "\n";
  out << "median value error: earliest step " << med_first << " final step " << med_last << "\n";
  out << "earliest above final for " << better << "/" << a.n << " trajectories\n";
  return 0;
}

int cmd_report(const RunConfig& cfg, const std::string& run_dir_flag, std::ostream& out,
               std::ostream&) {
  if (cfg.report.inputs.empty()) throw ConfigError("report: no input files (--inputs)");
  std::vector<EvalReport> merged;
  for (const auto& input : cfg.report.inputs) {
    std::ifstream in(input);
    if (!in.good()) throw ConfigError("report: cannot open " + input);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const std::string where = input + ":" + std::to_string(lineno);
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw ConfigError("report: " + where + ": " + e.what());
      }
      EvalReport r;
      try {
        r.method = j.at("method").get<std::string>();
        r.pde = j.at("pde").get<std::string>();
        r.steps = j.at("steps").get<int>();
        r.mse = j.at("mse").get<double>();
        r.std_error = j.at("stderr").get<double>();
        r.nrq = j.at("nrq").get<long>();
        r.nbm = j.at("nbm").get<long>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.wall_clock = j.at("wall_clock").get<double>();
      } catch (const json::exception& e) {
        throw ConfigError("report: " + where + ": " + e.what());
      }
      merged.push_back(r);
    }
  }
  if (merged.empty()) throw ConfigError("report: inputs contain no records");

  const fs::path dir = resolve_run_dir(run_dir_flag, "report", cfg);
  emit_figures(merged, {}, dir.string());
  out << "run " << dir.string() << "\n";
  out << detail::report_table(merged);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"physics-informed diffusion workbench"};
  app.name("pirf");
  app.require_subcommand(1);

  RunConfig cfg;
  Binder bind;
  std::string config_path, run_dir_flag, out_dir;
  bool dry_run = false;

  auto common = [&](CLI::App* c, bool with_run_dir = true) {
    c->add_option("--config", config_path, "JSON run configuration; flags override file values");
    c->add_flag("--dry-run", dry_run, "print the resolved configuration and exit");
    if (with_run_dir)
      c->add_option("--run-dir", run_dir_flag,
                    "output directory (default: a fresh one under PIRF_RUNS_DIR or ./runs)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a dataset of solved fields");
  common(gen, false);
  gen->add_option("--out", out_dir, "dataset output directory");
  bind.opt(gen, "--pde,--dataset.pde", cfg.dataset.pde,
           "problem: burgers, darcy, helmholtz, poisson, kolmogorov");
  bind.opt(gen, "--n,--dataset.n", cfg.dataset.n, "sample count");
  bind.opt(gen, "--res,--resolution,--dataset.resolution", cfg.dataset.resolution,
           "grid resolution");
  bind.opt(gen, "--seed,--dataset.seed", cfg.dataset.seed, "generation seed");

  CLI::App* train = app.add_subcommand("train", "pretrain a denoiser on a generated dataset");
  common(train);
  bind.opt(train, "--pde,--dataset.pde", cfg.dataset.pde, "dataset problem");
  bind.opt(train, "--n,--dataset.n", cfg.dataset.n, "dataset sample count");
  bind.opt(train, "--res,--resolution,--dataset.resolution", cfg.dataset.resolution,
           "dataset resolution");
  bind.opt(train, "--data-seed,--dataset.seed", cfg.dataset.seed, "dataset seed");
  bind.opt(train, "--widths,--model.widths", cfg.model.widths, "channel widths per stage", true);
  bind.opt(train, "--stages,--model.stages", cfg.model.stages,
           "stage count; 0 follows widths, otherwise must match");
  bind.opt(train, "--emb-dim,--model.emb_dim", cfg.model.emb_dim, "noise embedding width");
  bind.opt(train, "--model.block_kernel", cfg.model.block_kernel, "conv kernel size, 1 or 3");
  bind.opt(train, "--init-seed,--model.init_seed", cfg.model.init_seed, "weight init seed");
  bind.opt(train, "--lr,--train.lr", cfg.train.lr, "learning rate");
  bind.opt(train, "--batch,--train.batch", cfg.train.batch, "batch size");
  bind.opt(train, "--steps,--train.steps", cfg.train.steps, "optimizer steps");
  bind.opt(train, "--seed,--train.seed", cfg.train.seed, "training seed");
  bind.opt(train, "--ema-half-life,--train.ema_half_life", cfg.train.ema_half_life,
           "weight averaging half life in steps");
  bind.opt(train, "--pidm-gamma,--train.pidm_gamma", cfg.train.pidm_gamma,
           "residual loss weight; > 0 trains the reward-augmented objective");
  bind.flag(train, "--pidm-snr-scaled,--train.pidm_snr_scaled", cfg.train.pidm_snr_scaled,
            "scale the residual loss weight by 1/sigma^2");

  CLI::App* ft = app.add_subcommand("finetune", "reward fine-tuning of a base checkpoint");
  common(ft);
  bind.opt(ft, "--base,--finetune.base", cfg.finetune.base, "base checkpoint directory");
  bind.opt(ft, "--lr,--finetune.lr", cfg.finetune.lr, "learning rate");
  bind.opt(ft, "--T,--steps,--finetune.T", cfg.finetune.T, "sampling steps per trajectory");
  bind.opt(ft, "--truncate-steps,--K,--finetune.K", cfg.finetune.K,
           "final transitions with recorded activations");
  bind.opt(ft, "--layer-groups,--finetune.layer_groups", cfg.finetune.layer_groups,
           "trainable parameter groups; dec.hi names the highest-resolution decoder", true);
  bind.opt(ft, "--wr,--regularizer,--finetune.regularizer", cfg.finetune.regularizer,
           "none, online_weight, distill, offline_ema, or early_stop");
  bind.opt(ft, "--trajectories,--finetune.trajectories", cfg.finetune.trajectories,
           "total rollout budget");
  bind.opt(ft, "--batch,--finetune.batch", cfg.finetune.batch, "trajectories per update");
  bind.opt(ft, "--seed,--finetune.seed", cfg.finetune.seed, "fine-tuning seed");
  bind.opt(ft, "--finetune.lambda_weight", cfg.finetune.lambda_weight,
           "online weight penalty strength");
  bind.opt(ft, "--finetune.lambda_distill", cfg.finetune.lambda_distill,
           "distillation penalty strength");
  bind.opt(ft, "--finetune.ema_half_life", cfg.finetune.ema_half_life,
           "offline averaging half life in updates");
  bind.opt(ft, "--finetune.early_stop_patience", cfg.finetune.early_stop_patience,
           "evals without improvement before stopping");
  bind.opt(ft, "--max-updates,--finetune.max_updates", cfg.finetune.max_updates,
           "hard update cap for early_stop, 0 = none");
  bind.opt(ft, "--eval-every,--finetune.eval_every", cfg.finetune.eval_every,
           "held-out eval cadence in updates, 0 = final only");
  bind.opt(ft, "--eval-samples,--finetune.eval_samples", cfg.finetune.eval_samples,
           "rollouts per held-out eval");
  bind.opt(ft, "--clip-norm,--finetune.clip_norm", cfg.finetune.clip_norm,
           "global gradient clip, 0 = off");

  CLI::App* sample = app.add_subcommand("sample", "draw samples from a checkpoint");
  common(sample);
  bind.opt(sample, "--checkpoint,--sample.checkpoint", cfg.sample.checkpoint,
           "checkpoint directory");
  bind.opt(sample, "--steps,--sample.steps", cfg.sample.steps, "sampling steps");
  bind.opt(sample, "--n,--sample.n", cfg.sample.n, "sample count");
  bind.opt(sample, "--seed,--sample.seed", cfg.sample.seed, "suite seed");
  bind.opt(sample, "--sampler,--sample.sampler", cfg.sample.sampler,
           "heun or ddim; default follows the checkpoint kind");
  bind.flag(sample, "--use-ema,--sample.use_ema", cfg.sample.use_ema,
            "sample the averaged weights");

  CLI::App* eval = app.add_subcommand("eval", "benchmark methods on a checkpoint");
  common(eval);
  bind.opt(eval, "--checkpoint,--eval.checkpoint", cfg.eval.checkpoint, "checkpoint directory");
  bind.opt(eval, "--steps,--eval.steps", cfg.eval.steps, "sampling step counts", true);
  bind.opt(eval, "--n,--eval.n", cfg.eval.n, "trajectories per row");
  bind.opt(eval, "--seed,--eval.seed", cfg.eval.seed, "suite seed");
  bind.opt(eval, "--methods,--eval.methods", cfg.eval.methods,
           "methods to run; default follows the checkpoint kind", true);
  bind.flag(eval, "--use-ema,--eval.use_ema", cfg.eval.use_ema, "evaluate the averaged weights");
  bind.opt(eval, "--guidance-scale,--baselines.guidance_scale", cfg.baselines.guidance_scale,
           "guidance strength for dps and cocogen");
  bind.opt(eval, "--guided-fraction,--baselines.guided_fraction", cfg.baselines.guided_fraction,
           "trailing fraction of steps guided");
  bind.opt(eval, "--corrections,--baselines.corrections", cfg.baselines.corrections,
           "cocogen post-sampling ascent steps");
  bind.opt(eval, "--correction-step,--baselines.correction_step",
           cfg.baselines.correction_step, "cocogen ascent step size");

  CLI::App* ve = app.add_subcommand("value-error",
                                    "value approximation error along trajectories");
  common(ve);
  bind.opt(ve, "--checkpoint,--value_error.checkpoint", cfg.value_error.checkpoint,
           "checkpoint directory");
  bind.opt(ve, "--steps,--value_error.steps", cfg.value_error.steps, "sampling steps");
  bind.opt(ve, "--n,--value_error.n", cfg.value_error.n, "trajectory count");
  bind.opt(ve, "--seed,--value_error.seed", cfg.value_error.seed, "suite seed");
  bind.flag(ve, "--use-ema,--value_error.use_ema", cfg.value_error.use_ema,
            "analyze the averaged weights");

  CLI::App* rep = app.add_subcommand("report", "merge benchmark records into tables and figures");
  common(rep);
  bind.opt(rep, "--inputs,--report.inputs", cfg.report.inputs, "benchmark ndjson files", true);

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("pirf");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(int(argv.size()), argv.data());
    if (!config_path.empty()) cfg = RunConfig::from_file(config_path);
    bind.apply();
    cfg.validate();
    if (dry_run) {
      out << cfg.to_json().dump(2) << "\n";
      return 0;
    }
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "gen-data") return cmd_gen_data(cfg, out_dir, out, err);
    if (name == "train") return cmd_train(cfg, run_dir_flag, out, err);
    if (name == "finetune") return cmd_finetune(cfg, run_dir_flag, out, err);
    if (name == "sample") return cmd_sample(cfg, run_dir_flag, out, err);
    if (name == "eval") return cmd_eval(cfg, run_dir_flag, out, err);
    if (name == "value-error") return cmd_value_error(cfg, run_dir_flag, out, err);
    if (name == "report") return cmd_report(cfg, run_dir_flag, out, err);
    throw ConfigError("unknown command " + name);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run 'pirf --help' for usage\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  args.reserve(size_t(argc > 1 ? argc - 1 : 0));
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace pirf
