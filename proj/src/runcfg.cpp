#include "pirf/runcfg.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <initializer_list>

#include "pirf/evalkit.hpp"
#include "pirf/pirf.hpp"
#include "pirf/residual.hpp"

namespace pirf {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> known) {
  require(j.is_object(), "config: " + where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("config: unknown key " + where + "." + it.key());
  }
}

template <class T>
void read_key(const json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for " + where + "." + key + ": " + e.what());
  }
}

void cfg_require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError("config: " + msg);
}

}  // namespace

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["dataset"] = {{"pde", dataset.pde},
                  {"n", dataset.n},
                  {"resolution", dataset.resolution},
                  {"seed", dataset.seed}};
  j["model"] = {{"widths", model.widths},
                {"stages", model.stages},
                {"emb_dim", model.emb_dim},
                {"block_kernel", model.block_kernel},
                {"init_seed", model.init_seed}};
  j["train"] = {{"lr", train.lr},
                {"batch", train.batch},
                {"steps", train.steps},
                {"seed", train.seed},
                {"ema_half_life", train.ema_half_life},
                {"pidm_gamma", train.pidm_gamma},
                {"pidm_snr_scaled", train.pidm_snr_scaled}};
  j["finetune"] = {{"base", finetune.base},
                   {"lr", finetune.lr},
                   {"T", finetune.T},
                   {"K", finetune.K},
                   {"layer_groups", finetune.layer_groups},
                   {"regularizer", finetune.regularizer},
                   {"trajectories", finetune.trajectories},
                   {"batch", finetune.batch},
                   {"seed", finetune.seed},
                   {"lambda_weight", finetune.lambda_weight},
                   {"lambda_distill", finetune.lambda_distill},
                   {"ema_half_life", finetune.ema_half_life},
                   {"early_stop_patience", finetune.early_stop_patience},
                   {"max_updates", finetune.max_updates},
                   {"eval_every", finetune.eval_every},
                   {"eval_samples", finetune.eval_samples},
                   {"clip_norm", finetune.clip_norm}};
  j["baselines"] = {{"guidance_scale", baselines.guidance_scale},
                    {"guided_fraction", baselines.guided_fraction},
                    {"corrections", baselines.corrections},
                    {"correction_step", baselines.correction_step}};
  j["eval"] = {{"checkpoint", eval.checkpoint}, {"steps", eval.steps},
               {"n", eval.n},                   {"seed", eval.seed},
               {"methods", eval.methods},       {"use_ema", eval.use_ema}};
  j["sample"] = {{"checkpoint", sample.checkpoint},
                 {"steps", sample.steps},
                 {"n", sample.n},
                 {"seed", sample.seed},
                 {"sampler", sample.sampler},
                 {"use_ema", sample.use_ema}};
  j["value_error"] = {{"checkpoint", value_error.checkpoint},
                      {"steps", value_error.steps},
                      {"n", value_error.n},
                      {"seed", value_error.seed},
                      {"use_ema", value_error.use_ema}};
  j["report"] = {{"inputs", report.inputs}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  check_keys(j, "<root>",
             {"dataset", "model", "train", "finetune", "baselines", "eval", "sample",
              "value_error", "report"});

  if (j.contains("dataset")) {
    const auto& b = j.at("dataset");
    check_keys(b, "dataset", {"pde", "n", "resolution", "seed"});
    read_key(b, "dataset", "pde", cfg.dataset.pde);
    read_key(b, "dataset", "n", cfg.dataset.n);
    read_key(b, "dataset", "resolution", cfg.dataset.resolution);
    read_key(b, "dataset", "seed", cfg.dataset.seed);
  }
  if (j.contains("model")) {
    const auto& b = j.at("model");
    check_keys(b, "model", {"widths", "stages", "emb_dim", "block_kernel", "init_seed"});
    read_key(b, "model", "widths", cfg.model.widths);
    read_key(b, "model", "stages", cfg.model.stages);
    read_key(b, "model", "emb_dim", cfg.model.emb_dim);
    read_key(b, "model", "block_kernel", cfg.model.block_kernel);
    read_key(b, "model", "init_seed", cfg.model.init_seed);
  }
  if (j.contains("train")) {
    const auto& b = j.at("train");
    check_keys(b, "train",
               {"lr", "batch", "steps", "seed", "ema_half_life", "pidm_gamma",
                "pidm_snr_scaled"});
    read_key(b, "train", "lr", cfg.train.lr);
    read_key(b, "train", "batch", cfg.train.batch);
    read_key(b, "train", "steps", cfg.train.steps);
    read_key(b, "train", "seed", cfg.train.seed);
    read_key(b, "train", "ema_half_life", cfg.train.ema_half_life);
    read_key(b, "train", "pidm_gamma", cfg.train.pidm_gamma);
    read_key(b, "train", "pidm_snr_scaled", cfg.train.pidm_snr_scaled);
  }
  if (j.contains("finetune")) {
    const auto& b = j.at("finetune");
    check_keys(b, "finetune",
               {"base", "lr", "T", "K", "layer_groups", "regularizer", "trajectories", "batch",
                "seed", "lambda_weight", "lambda_distill", "ema_half_life",
                "early_stop_patience", "max_updates", "eval_every", "eval_samples",
                "clip_norm"});
    read_key(b, "finetune", "base", cfg.finetune.base);
    read_key(b, "finetune", "lr", cfg.finetune.lr);
    read_key(b, "finetune", "T", cfg.finetune.T);
    read_key(b, "finetune", "K", cfg.finetune.K);
    read_key(b, "finetune", "layer_groups", cfg.finetune.layer_groups);
    read_key(b, "finetune", "regularizer", cfg.finetune.regularizer);
    read_key(b, "finetune", "trajectories", cfg.finetune.trajectories);
    read_key(b, "finetune", "batch", cfg.finetune.batch);
    read_key(b, "finetune", "seed", cfg.finetune.seed);
    read_key(b, "finetune", "lambda_weight", cfg.finetune.lambda_weight);
    read_key(b, "finetune", "lambda_distill", cfg.finetune.lambda_distill);
    read_key(b, "finetune", "ema_half_life", cfg.finetune.ema_half_life);
    read_key(b, "finetune", "early_stop_patience", cfg.finetune.early_stop_patience);
    read_key(b, "finetune", "max_updates", cfg.finetune.max_updates);
    read_key(b, "finetune", "eval_every", cfg.finetune.eval_every);
    read_key(b, "finetune", "eval_samples", cfg.finetune.eval_samples);
    read_key(b, "finetune", "clip_norm", cfg.finetune.clip_norm);
  }
  if (j.contains("baselines")) {
    const auto& b = j.at("baselines");
    check_keys(b, "baselines",
               {"guidance_scale", "guided_fraction", "corrections", "correction_step"});
    read_key(b, "baselines", "guidance_scale", cfg.baselines.guidance_scale);
    read_key(b, "baselines", "guided_fraction", cfg.baselines.guided_fraction);
    read_key(b, "baselines", "corrections", cfg.baselines.corrections);
    read_key(b, "baselines", "correction_step", cfg.baselines.correction_step);
  }
  if (j.contains("eval")) {
    const auto& b = j.at("eval");
    check_keys(b, "eval", {"checkpoint", "steps", "n", "seed", "methods", "use_ema"});
    read_key(b, "eval", "checkpoint", cfg.eval.checkpoint);
    read_key(b, "eval", "steps", cfg.eval.steps);
    read_key(b, "eval", "n", cfg.eval.n);
    read_key(b, "eval", "seed", cfg.eval.seed);
    read_key(b, "eval", "methods", cfg.eval.methods);
    read_key(b, "eval", "use_ema", cfg.eval.use_ema);
  }
  if (j.contains("sample")) {
    const auto& b = j.at("sample");
    check_keys(b, "sample", {"checkpoint", "steps", "n", "seed", "sampler", "use_ema"});
    read_key(b, "sample", "checkpoint", cfg.sample.checkpoint);
    read_key(b, "sample", "steps", cfg.sample.steps);
    read_key(b, "sample", "n", cfg.sample.n);
    read_key(b, "sample", "seed", cfg.sample.seed);
    read_key(b, "sample", "sampler", cfg.sample.sampler);
    read_key(b, "sample", "use_ema", cfg.sample.use_ema);
  }
  if (j.contains("value_error")) {
    const auto& b = j.at("value_error");
    check_keys(b, "value_error", {"checkpoint", "steps", "n", "seed", "use_ema"});
    read_key(b, "value_error", "checkpoint", cfg.value_error.checkpoint);
    read_key(b, "value_error", "steps", cfg.value_error.steps);
    read_key(b, "value_error", "n", cfg.value_error.n);
    read_key(b, "value_error", "seed", cfg.value_error.seed);
    read_key(b, "value_error", "use_ema", cfg.value_error.use_ema);
  }
  if (j.contains("report")) {
    const auto& b = j.at("report");
    check_keys(b, "report", {"inputs"});
    read_key(b, "report", "inputs", cfg.report.inputs);
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f.good()) throw ConfigError("config: cannot open " + p.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + p.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RunConfig::validate() const {
  try {
    pde_from_string(dataset.pde);
  } catch (const Error&) {
    throw ConfigError("config: dataset.pde '" + dataset.pde + "' is not a known problem");
  }
  cfg_require(dataset.n >= 1, "dataset.n must be >= 1");
  cfg_require(dataset.resolution >= 4, "dataset.resolution must be >= 4");

  cfg_require(!model.widths.empty(), "model.widths must not be empty");
  for (int w : model.widths) cfg_require(w >= 1, "model.widths entries must be positive");
  cfg_require(model.stages == 0 || model.stages == int(model.widths.size()),
              "model.stages must be 0 or equal to the number of widths");
  cfg_require(model.emb_dim >= 2 && model.emb_dim % 2 == 0, "model.emb_dim must be even");
  cfg_require(model.block_kernel == 1 || model.block_kernel == 3,
              "model.block_kernel must be 1 or 3");

  cfg_require(train.lr > 0, "train.lr must be positive");
  cfg_require(train.batch >= 1, "train.batch must be >= 1");
  cfg_require(train.steps >= 1, "train.steps must be >= 1");
  cfg_require(train.ema_half_life > 0, "train.ema_half_life must be positive");
  cfg_require(train.pidm_gamma >= 0, "train.pidm_gamma must be >= 0");

  cfg_require(finetune.lr >= 0, "finetune.lr must be >= 0");
  cfg_require(finetune.T >= 1, "finetune.T must be >= 1");
  cfg_require(finetune.K >= 1 && finetune.K <= finetune.T,
              "finetune.K must lie in [1, finetune.T]");
  std::string reg = finetune.regularizer;
  for (char& c : reg)
    if (c == '-') c = '_';
  try {
    regularizer_from_string(reg);
  } catch (const Error&) {
    throw ConfigError("config: finetune.regularizer '" + finetune.regularizer +
                      "' is not one of none, online_weight, distill, offline_ema, early_stop");
  }
  cfg_require(finetune.trajectories >= 1, "finetune.trajectories must be >= 1");
  cfg_require(finetune.batch >= 1, "finetune.batch must be >= 1");
  cfg_require(finetune.lambda_weight >= 0 && finetune.lambda_distill >= 0,
              "finetune penalty weights must be >= 0");
  cfg_require(finetune.ema_half_life > 0, "finetune.ema_half_life must be positive");
  cfg_require(finetune.early_stop_patience >= 1, "finetune.early_stop_patience must be >= 1");
  cfg_require(finetune.max_updates >= 0, "finetune.max_updates must be >= 0");
  cfg_require(finetune.eval_every >= 0, "finetune.eval_every must be >= 0");
  cfg_require(finetune.eval_samples >= 1, "finetune.eval_samples must be >= 1");
  cfg_require(finetune.clip_norm >= 0, "finetune.clip_norm must be >= 0");

  cfg_require(baselines.guidance_scale >= 0, "baselines.guidance_scale must be >= 0");
  cfg_require(baselines.guided_fraction > 0 && baselines.guided_fraction <= 1,
              "baselines.guided_fraction must lie in (0, 1]");
  cfg_require(baselines.corrections >= 0, "baselines.corrections must be >= 0");
  cfg_require(baselines.correction_step > 0, "baselines.correction_step must be positive");

  cfg_require(!eval.steps.empty(), "eval.steps must not be empty");
  for (int s : eval.steps) cfg_require(s >= 1, "eval.steps entries must be >= 1");
  cfg_require(eval.n >= 1, "eval.n must be >= 1");
  for (const auto& m : eval.methods) {
    const std::string c = canonical_method(m);
    cfg_require(c == "unguided" || c == "dps" || c == "cocogen" || c == "pidm" || c == "pirf",
                "eval.methods entry '" + m + "' is not a known method");
  }

  cfg_require(sample.steps >= 1, "sample.steps must be >= 1");
  cfg_require(sample.n >= 1, "sample.n must be >= 1");
  cfg_require(sample.sampler.empty() || sample.sampler == "heun" || sample.sampler == "ddim",
              "sample.sampler must be empty, 'heun', or 'ddim'");

  cfg_require(value_error.steps >= 1, "value_error.steps must be >= 1");
  cfg_require(value_error.n >= 1, "value_error.n must be >= 1");
}

std::string config_hash(const RunConfig& cfg) {
  const std::string dump = cfg.to_json().dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::filesystem::path runs_root() {
  if (const char* env = std::getenv("PIRF_RUNS_DIR"); env && *env)
    return std::filesystem::path(env);
  return std::filesystem::path("runs");
}

std::filesystem::path make_run_dir(const std::string& command, const RunConfig& cfg) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);

  const std::string base = command + "-" + config_hash(cfg) + "-" + stamp;
  std::filesystem::path dir = runs_root() / base;
  for (int k = 1; std::filesystem::exists(dir); ++k)
    dir = runs_root() / (base + "-" + std::to_string(k));
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, "make_run_dir: cannot create " + dir.string());

  std::ofstream f(dir / "config.json", std::ios::binary);
  f << cfg.to_json().dump(2) << "\n";
  require(f.good(), "make_run_dir: cannot persist config.json");
  return dir;
}

}  // namespace pirf
