#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ubpl/dataset.hpp"
#include "ubpl/ensemble.hpp"
#include "ubpl/nn.hpp"
#include "ubpl/optim.hpp"
#include "ubpl/ssl.hpp"

namespace ubpl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string method_name(Method m);
std::string task_name(Task t);

// One experiment, fully specified. Parsed from a plain-text document of
// `key = value` lines (dotted keys group settings, `#` starts a comment).
// Every key has a default; unknown keys and duplicate keys are hard errors.
//
// Defaults that depend on the task (optimizer, unlabeled ratio, beta_fd)
// follow the value of `task`, so set `task` in the file and override the
// rest only where the experiment deviates.
struct ExperimentConfig {
  Task task = Task::classification;
  Method method = Method::supervised;
  uint64_t seed = 1388;
  std::vector<uint64_t> multi_seeds = {1388, 1389, 1390};
  int epochs = 30;
  int steps_per_epoch = 50;

  struct DatasetCfg {
    int image_size = 16;
    int classes = 4;     // classification only
    int keypoints = 5;   // pose only
    int size = 200;      // generated pool, split into labeled + unlabeled
    int labeled = 30;
    int eval_size = 128; // held-out set, generated separately
    uint64_t seed = 1388;
    bool operator==(const DatasetCfg&) const = default;
  } dataset;

  struct BatchCfg {
    int labeled = 8;
    // Unlabeled batch = ratio * labeled batch (0 disables unlabeled data).
    int unlabeled_ratio = 7;
    bool operator==(const BatchCfg&) const = default;
  } batch;

  struct ModelCfg {
    std::vector<int> widths = {6, 12};
    double heatmap_sigma = 1.0;
    bool operator==(const ModelCfg&) const = default;
  } model;

  struct OptimCfg {
    std::string kind = "nesterov";  // "nesterov" | "adam"
    double lr = 0.03;
    double momentum = 0.9;
    bool operator==(const OptimCfg&) const = default;
  } optim;

  struct SslCfg {
    double tau = 0.95;
    double ema_decay = 0.999;
    bool mt_require_tau = true;
    bool operator==(const SslCfg&) const = default;
  } ssl;

  struct UbplCfg {
    bool enabled = false;
    bool fd_enabled = true;
    double lambda_ssl = 10.0;
    double lambda_pse = 10.0;
    double lambda_fd = 1.0;
    double beta_fd = 1000.0;
    // Sub-seeds mixed into the run seed for each branch's weight init;
    // they must differ so the branches start from different weights.
    uint64_t seed_a = 1;
    uint64_t seed_b = 2;
    bool operator==(const UbplCfg&) const = default;
  } ubpl;

  bool operator==(const ExperimentConfig&) const = default;

  // Bridges into the runtime types.
  ModelSpec model_spec(uint64_t init_seed) const;
  OptimSpec optim_spec() const;
  SslHyper ssl_hyper() const;
  EnsembleHyper ensemble_hyper() const;  // lambda_fd forced to 0 when fd_enabled is false
  SplitSpec split_spec() const;
  TaskMeta task_meta(std::vector<int> flip_map) const;
};

// Parses a config document. `overrides` are extra `key=value` assignments
// applied after the document (the CLI's --set flag); later overrides win.
ExperimentConfig parse_config_text(
    const std::string& text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});

// Serializes every key. parse_config_text(config_to_text(c)) == c, including
// bit-exact doubles, so a saved snapshot replays the exact experiment.
std::string config_to_text(const ExperimentConfig& cfg);

void validate_config(const ExperimentConfig& cfg);

}  // namespace ubpl
