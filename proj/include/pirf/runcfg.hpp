#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pirf/common.hpp"

namespace pirf {

// Bad configuration or usage; the CLI maps this to exit code 2 (runtime
// failures keep plain Error and exit 1).
struct ConfigError : Error {
  using Error::Error;
};

// Fully-resolved run configuration. One JSON document with fixed nested
// blocks; unknown keys anywhere are rejected so typos cannot silently fall
// back to defaults. Every artifact-producing command persists the resolved
// document next to its outputs, and rerunning from that file reproduces the
// artifacts byte for byte (wall-clock report fields aside).
struct RunConfig {
  struct Dataset {
    std::string pde = "darcy";
    long n = 160;
    int resolution = 32;
    std::uint64_t seed = 0;
  } dataset;

  struct Model {
    std::vector<int> widths = {12, 16};
    int stages = 0;  // 0 = follow widths; otherwise must equal widths.size()
    int emb_dim = 32;
    int block_kernel = 3;
    std::uint64_t init_seed = 1;
  } model;

  struct Train {
    double lr = 1e-3;
    int batch = 4;
    long steps = 20000;
    std::uint64_t seed = 1;
    double ema_half_life = 500;
    double pidm_gamma = 0;  // > 0 trains with the reward-augmented loss
    bool pidm_snr_scaled = false;
  } train;

  struct Finetune {
    std::string base;  // base checkpoint directory
    double lr = 1e-4;
    int T = 20;
    int K = 2;
    std::vector<std::string> layer_groups;  // empty = all groups trainable
    std::string regularizer = "offline_ema";
    long trajectories = 30000;
    int batch = 8;
    std::uint64_t seed = 2;
    double lambda_weight = 1e-3;
    double lambda_distill = 1e-3;
    double ema_half_life = 500;
    int early_stop_patience = 5;
    long max_updates = 0;
    int eval_every = 0;
    int eval_samples = 8;
    double clip_norm = 0;
  } finetune;

  struct Baselines {
    double guidance_scale = 0;
    double guided_fraction = 0.2;
    int corrections = 0;
    double correction_step = 1e-3;
  } baselines;

  struct Eval {
    std::string checkpoint;
    std::vector<int> steps = {20, 40, 80};
    int n = 256;
    std::uint64_t seed = 0;
    std::vector<std::string> methods;  // empty = every method the checkpoint supports
    bool use_ema = false;
  } eval;

  struct Sample {
    std::string checkpoint;
    int steps = 20;
    int n = 9;
    std::uint64_t seed = 0;
    std::string sampler;  // "heun", "ddim", or empty = by checkpoint kind
    bool use_ema = false;
  } sample;

  struct ValueError {
    std::string checkpoint;
    int steps = 20;
    int n = 800;
    std::uint64_t seed = 0;
    bool use_ema = false;
  } value_error;

  struct Report {
    std::vector<std::string> inputs;  // benchmark ndjson files to merge
  } report;

  nlohmann::ordered_json to_json() const;  // canonical: fixed key order, all fields
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::filesystem::path& p);
  void validate() const;  // cross-field checks; throws ConfigError
};

// 16 hex digits of FNV-1a over the canonical dump; names run directories and
// ties artifacts back to the exact configuration.
std::string config_hash(const RunConfig& cfg);

// Output root: $PIRF_RUNS_DIR when set, ./runs otherwise.
std::filesystem::path runs_root();

// Creates <root>/<command>-<hash>-<UTC timestamp>[-k], k deduplicating
// same-second reruns, and persists the resolved config inside as config.json.
std::filesystem::path make_run_dir(const std::string& command, const RunConfig& cfg);

}  // namespace pirf
