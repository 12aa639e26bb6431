#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ubpl/config.hpp"
#include "ubpl/dataset.hpp"
#include "ubpl/diagnostics.hpp"
#include "ubpl/ensemble.hpp"
#include "ubpl/ssl.hpp"

namespace ubpl {

// The three datasets one experiment touches, all pure functions of the
// config: a labeled partition, the unlabeled partition (labels held back),
// and an independently generated held-out eval set.
struct ExperimentData {
  Dataset labeled;
  UnlabeledSet unlabeled;
  Dataset eval;
};
ExperimentData prepare_data(const ExperimentConfig& cfg);

// Batch index selection: uniform with replacement, keyed purely by
// (run seed, epoch, step, pool) — never by branch, so both UBPL branches
// and a standalone run see the very same batches.
std::vector<int> select_batch(uint64_t run_seed, int epoch, int step,
                              bool unlabeled_pool, int pool_size, int count);

// View construction, keyed by (run seed, epoch, step, batch slot, view,
// pool) — again branch-free: both branches train on identical views.
TrainItem make_labeled_item(const LabeledSample& s, int pool_index, int slot,
                            const TaskMeta& meta, uint64_t run_seed, int epoch,
                            int step);
TrainItem make_unlabeled_item(const Tensor& image, int pool_index, int slot,
                              const TaskMeta& meta, uint64_t run_seed,
                              int epoch, int step);

// Un-augmented model outputs as plain values: softmax probabilities
// (classification) or flattened heatmaps (pose), one vector per image.
std::vector<std::vector<double>> predict_outputs(
    const Model& model, const std::vector<Tensor>& images);

// Held-out metric: classification error percentage, or mean keypoint MSE of
// the decoded heatmap peaks. evaluate_ensemble averages the two models'
// outputs first.
double evaluate_model(const Model& model, const Dataset& eval_set);
double evaluate_ensemble(const Model& a, const Model& b,
                         const Dataset& eval_set);
std::string eval_metric_name(Task task);  // "error_rate" / "keypoint_mse"

struct RunPaths {
  std::string dir;
  std::string config;      // effective-config snapshot
  std::string metrics;     // long-format CSV
  std::string checkpoint;  // final parameters + optimizer state
};
RunPaths run_paths(const std::string& out_dir);

struct RunSummary {
  RunPaths paths;
  std::string run_id;
  double final_eval = 0.0;            // ensemble metric for UBPL runs
  std::vector<double> eval_history;   // one entry per epoch
};

// Trains the configured experiment into out_dir (created; refuses to reuse
// a directory that already holds a metrics file). Writes the config
// snapshot first, per-epoch metric rows as training goes, and the final
// checkpoint at the end. Identical config => byte-identical metrics file.
RunSummary run_experiment(const ExperimentConfig& cfg,
                          const std::string& out_dir);

// Rebuilds the trained branches of a finished run from its snapshot +
// checkpoint. branches holds one entry, or two when the run was UBPL.
struct LoadedRun {
  ExperimentConfig cfg;
  std::vector<BranchState> branches;
};
LoadedRun load_run(const std::string& run_dir);

// Pseudo-label quality on the unlabeled partition, measured against the
// held-back ground truth (diagnostics only). Uses un-augmented views; for
// UBPL the two branches' combined prediction, for Mean Teacher the teacher,
// otherwise the model itself (combined with itself, which is a no-op).
struct PseudoQuality {
  int accepted = 0;
  bool has_error = false;  // false when nothing was accepted
  double error = 0.0;      // % wrong labels, or mean squared pixel distance
};
PseudoQuality pseudo_quality(const std::vector<const Model*>& providers,
                             const UnlabeledSet& unlabeled,
                             const TaskMeta& meta, double tau);

struct DiagnoseOptions {
  double epsilon = 0.1;
  int bins = 10;
};
struct DiagnoseArtifacts {
  std::string calibration_csv;
  std::string chebyshev_json;
  int nonempty_bins = 0;
};
// Calibration of pseudo-label confidence vs true outcome on the unlabeled
// partition (all samples, no threshold gate), and a variance/covariance
// report of the run's predictor ensemble on the held-out set.
DiagnoseArtifacts diagnose_run(const std::string& run_dir,
                               const std::string& out_dir,
                               const DiagnoseOptions& opt = {});

// Line chart of one metric, one polyline per metrics file, with a legend.
// Byte-identical output for identical inputs.
void plot_metric(const std::vector<std::string>& metrics_files,
                 const std::string& metric, const std::string& out_svg);

// baseline / UBPL without the decorrelation term / full UBPL, every arm run
// over every seed in multi_seeds with the shared dataset seed.
struct AblationRow {
  std::string arm;
  uint64_t seed = 0;
  double final_eval = 0.0;
};
struct AblationSummary {
  std::string arm;
  double mean = 0.0;
  double stddev = 0.0;  // population
  double median = 0.0;
};
struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;
  std::string rows_csv;
  std::string summary_csv;
};
AblationResult run_ablation(const ExperimentConfig& base,
                            const std::string& out_dir);

}  // namespace ubpl
