#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ubpl/augment.hpp"
#include "ubpl/nn.hpp"
#include "ubpl/optim.hpp"
#include "ubpl/tensor.hpp"

namespace ubpl {

enum class Method { supervised, mean_teacher, fixmatch, dualpose };

struct LossBreakdown {
  double l_sup = 0.0;
  double l_unsup = 0.0;
  double l_ssl = 0.0;
  double l_pse = 0.0;
  double l_fd = 0.0;
  double total = 0.0;
  int accepted_pseudo_count = 0;
};

struct SslHyper {
  double tau = 0.95;
  double ema_decay = 0.999;
  // Teacher-supervises-student filter: teacher confidence must beat the
  // student's; optionally it must also clear tau (both gates by default).
  bool mt_require_tau = true;
};

struct TaskMeta {
  Task task = Task::classification;
  std::vector<int> flip_map;
  double heatmap_sigma = 1.0;
};

// One augmented view of a sample.
struct SampleView {
  Tensor image;
  std::vector<Keypoint> keypoints;  // labeled pose only
  TransformRecord record;
};

struct TrainItem {
  int id = -1;
  SampleView weak;    // weak / easy view
  SampleView strong;  // strong / hard view
  int label = -1;     // labeled classification only
};

// One semi-supervised learner: a model, its optimizer, and (for the
// teacher-student method) an EMA copy of the parameters.
struct BranchState {
  Method method = Method::supervised;
  Model model;
  Optimizer opt;
  std::optional<Model> teacher;
  int64_t step = 0;

  BranchState(Method m, Model mdl, OptimSpec opt_spec)
      : method(m), model(std::move(mdl)), opt(opt_spec, model.params()) {
    if (method == Method::mean_teacher) teacher.emplace(model.clone());
  }
};

void ema_update(std::vector<double>& teacher,
                const std::vector<double>& student, double decay);
void ema_update(Model& teacher, const Model& student, double decay);

// --- masked loss builders (the differentiable halves of the methods) ---
// All average over the full batch size; masked-out entries contribute 0.
// With nothing accepted the result is a constant 0.

Tensor masked_prob_consistency(const std::vector<Tensor>& probs,
                               const std::vector<std::vector<double>>& targets,
                               const std::vector<char>& mask, int batch_size);

// preds are [K,H,W]; targets flattened K*H*W; mask is per (sample, channel).
Tensor masked_heatmap_mse(const std::vector<Tensor>& preds,
                          const std::vector<std::vector<double>>& targets,
                          const std::vector<std::vector<char>>& masks,
                          int batch_size);

Tensor masked_hard_cross_entropy(const std::vector<Tensor>& logits,
                                 const std::vector<int>& hard_labels,
                                 const std::vector<char>& mask,
                                 int batch_size);

// Differentiable pieces of one branch's semi-supervised loss on a batch,
// plus the value-level context the two-branch wrapper needs.
struct SslTerms {
  Tensor l_sup;
  Tensor l_unsup;
  int accepted = 0;
  // Per unlabeled item, in batch order:
  std::vector<Tensor> strong_outputs;  // logits [K] or heatmaps [K,H,W]
  std::vector<std::vector<double>> weak_pred_values;  // probs or heatmaps
  // Feature taps of the labeled weak views (decorrelation input).
  std::vector<FeatureTap> labeled_taps;
};

// Builds l_sup/l_unsup for the branch's method. Mask and target passes run
// without graph construction; targets enter the graph as constants, so
// gradients w.r.t. the target-producing pass are identically zero.
// pseudo_context forces strong_outputs / weak_pred_values to be populated
// even for methods that would not need them on their own.
SslTerms build_ssl_terms(BranchState& branch,
                         const std::vector<TrainItem>& labeled,
                         const std::vector<TrainItem>& unlabeled,
                         const SslHyper& hyper, const TaskMeta& meta,
                         bool pseudo_context = false);

// One standalone training step: loss = lambda_ssl * (l_sup + l_unsup),
// backward, optimizer step, then the EMA update where applicable.
LossBreakdown branch_train_step(BranchState& branch,
                                const std::vector<TrainItem>& labeled,
                                const std::vector<TrainItem>& unlabeled,
                                const SslHyper& hyper, const TaskMeta& meta,
                                double lambda_ssl);

}  // namespace ubpl
