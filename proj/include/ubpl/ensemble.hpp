#pragma once

#include <utility>
#include <vector>

#include "ubpl/ssl.hpp"

namespace ubpl {

struct EnsembleHyper {
  double lambda_ssl = 10.0;
  double lambda_pse = 10.0;
  double lambda_fd = 1.0;
  double beta_fd = 1.0;
  SslHyper ssl;
};

// One combined pseudo-label: the elementwise mean of the two branches'
// weak-view predictions, with confidence gating. Classification entries
// carry one confidence (the max mean probability); pose entries carry one
// per keypoint channel (decoded peak value, clamped to [0,1]).
struct PseudoEntry {
  std::vector<double> prediction;
  std::vector<double> confidence;
  std::vector<char> accepted;  // parallel to confidence
  int hard_label = -1;         // classification: argmax of the mean
};

struct PseudoLabelBatch {
  Shape pred_shape;  // {K} or {K, H, W}
  double tau = 0.95;
  std::vector<PseudoEntry> entries;
  int accepted_units() const;
};

// accepted[j] <=> confidence[j] >= tau; symmetric in its two inputs.
PseudoLabelBatch combine_pseudo_labels(
    const std::vector<std::vector<double>>& preds_a,
    const std::vector<std::vector<double>>& preds_b, const Shape& pred_shape,
    double tau);

// Mean over samples and channels of the cross-branch covariance between the
// two feature taps, taken across spatial positions, scaled by beta_fd.
// Differentiable w.r.t. both branches' features.
Tensor fd_loss(const std::vector<FeatureTap>& taps_a,
               const std::vector<FeatureTap>& taps_b, double beta_fd);

// Loss of one branch's strong-view outputs against the accepted combined
// pseudo-labels: masked hard-label cross-entropy (classification) or masked
// per-channel MSE against the pseudo heatmaps aligned into each strong
// frame (pose). Targets are constants. Averages over the full batch.
Tensor pseudo_label_loss(const std::vector<Tensor>& strong_outputs,
                         const PseudoLabelBatch& pseudo, const TaskMeta& meta,
                         const std::vector<TrainItem>& unlabeled);

// total = lambda_ssl*l_ssl + lambda_pse*l_pse + lambda_fd*l_fd.
// Rejects negative weights.
double weighted_total(double l_ssl, double l_pse, double l_fd,
                      double lambda_ssl, double lambda_pse, double lambda_fd);

struct EnsembleState {
  BranchState a;
  BranchState b;
  EnsembleHyper hyper;
};

// One two-branch training step on a shared batch. Both branches see the
// same views; pseudo-labels are combined from their weak-view predictions;
// the decorrelation term is built once on the labeled taps and charged to
// both totals. Gradient sweeps run on cached forward values, so the two
// parameter updates behave as if applied simultaneously. Zero-weighted
// terms are skipped entirely: with lambda_pse = lambda_fd = 0 a branch
// update is bit-identical to its standalone training step.
// accepted_pseudo_count reports ensemble-accepted units when the pseudo
// term is active, otherwise the branch method's own accepted count.
std::pair<LossBreakdown, LossBreakdown> ubpl_train_step(
    EnsembleState& es, const std::vector<TrainItem>& labeled,
    const std::vector<TrainItem>& unlabeled, const TaskMeta& meta);

}  // namespace ubpl
