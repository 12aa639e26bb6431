#include "ubpl/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace ubpl {

void ema_update(std::vector<double>& teacher,
                const std::vector<double>& student, double decay) {
  if (teacher.size() != student.size())
    throw ShapeError("ema update: teacher has " +
                     std::to_string(teacher.size()) + " values, student " +
                     std::to_string(student.size()));
  if (!(decay >= 0.0 && decay <= 1.0))
    throw NumericError("ema update: decay must lie in [0, 1]");
  for (size_t i = 0; i < teacher.size(); ++i)
    teacher[i] = decay * teacher[i] + (1.0 - decay) * student[i];
}

void ema_update(Model& teacher, const Model& student, double decay) {
  auto& tp = teacher.params();
  const auto& sp = student.params();
  if (tp.size() != sp.size())
    throw ShapeError("ema update: models have different parameter lists");
  for (size_t i = 0; i < tp.size(); ++i)
    ema_update(tp[i].leaf_values(), sp[i].values(), decay);
}

namespace {

std::vector<double> onehot(int k, int label) {
  if (label < 0 || label >= k)
    throw ShapeError("class label " + std::to_string(label) +
                     " outside [0, " + std::to_string(k) + ")");
  std::vector<double> t(k, 0.0);
  t[label] = 1.0;
  return t;
}

// Softmax probabilities as plain values (no graph).
std::vector<double> prob_values(const Tensor& logits) {
  NoGradGuard ng;
  return softmax(logits).values();
}

double max_value(const std::vector<double>& v) {
  return *std::max_element(v.begin(), v.end());
}

int argmax_index(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<double> keypoint_confidences(const Tensor& heatmap) {
  std::vector<double> conf;
  for (const auto& p : decode_heatmap(heatmap)) conf.push_back(p.confidence);
  return conf;
}

}  // namespace

Tensor masked_prob_consistency(const std::vector<Tensor>& probs,
                               const std::vector<std::vector<double>>& targets,
                               const std::vector<char>& mask, int batch_size) {
  if (probs.size() != targets.size() || probs.size() != mask.size())
    throw ShapeError("consistency loss: predictions, targets and mask must "
                     "have equal length");
  if (batch_size <= 0) throw ShapeError("consistency loss: batch size <= 0");
  std::vector<Tensor> terms;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (!mask[i]) continue;
    if (static_cast<size_t>(probs[i].size()) != targets[i].size())
      throw ShapeError("consistency loss: target length mismatch");
    terms.push_back(mse(probs[i], Tensor::leaf(probs[i].shape(), targets[i])));
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  return scale(sum_many(terms), 1.0 / batch_size);
}

Tensor masked_heatmap_mse(const std::vector<Tensor>& preds,
                          const std::vector<std::vector<double>>& targets,
                          const std::vector<std::vector<char>>& masks,
                          int batch_size) {
  if (preds.size() != targets.size() || preds.size() != masks.size())
    throw ShapeError("heatmap loss: predictions, targets and masks must have "
                     "equal length");
  if (batch_size <= 0) throw ShapeError("heatmap loss: batch size <= 0");
  std::vector<Tensor> sample_terms;
  for (size_t i = 0; i < preds.size(); ++i) {
    const Shape& s = preds[i].shape();
    if (s.size() != 3)
      throw ShapeError("heatmap loss: prediction must be [K, H, W]");
    const int k = s[0], cells = s[1] * s[2];
    if (static_cast<int>(masks[i].size()) != k)
      throw ShapeError("heatmap loss: mask must have one bit per channel");
    if (static_cast<int>(targets[i].size()) != k * cells)
      throw ShapeError("heatmap loss: target length mismatch");
    Tensor flat = reshape(preds[i], {k, cells});
    std::vector<Tensor> channel_terms;
    for (int c = 0; c < k; ++c) {
      if (!masks[i][c]) continue;
      std::vector<double> target(targets[i].begin() + c * cells,
                                 targets[i].begin() + (c + 1) * cells);
      channel_terms.push_back(
          mse(row(flat, c), Tensor::leaf({cells}, std::move(target))));
    }
    if (!channel_terms.empty())
      sample_terms.push_back(scale(sum_many(channel_terms), 1.0 / k));
  }
  if (sample_terms.empty()) return Tensor::scalar(0.0);
  return scale(sum_many(sample_terms), 1.0 / batch_size);
}

Tensor masked_hard_cross_entropy(const std::vector<Tensor>& logits,
                                 const std::vector<int>& hard_labels,
                                 const std::vector<char>& mask,
                                 int batch_size) {
  if (logits.size() != hard_labels.size() || logits.size() != mask.size())
    throw ShapeError("hard-label loss: logits, labels and mask must have "
                     "equal length");
  if (batch_size <= 0) throw ShapeError("hard-label loss: batch size <= 0");
  std::vector<Tensor> terms;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    terms.push_back(softmax_cross_entropy(
        logits[i], onehot(logits[i].size(), hard_labels[i])));
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  return scale(sum_many(terms), 1.0 / batch_size);
}

namespace {

struct UnsupResult {
  Tensor l_unsup;
  int accepted = 0;
  std::vector<Tensor> strong_outputs;
  std::vector<std::vector<double>> weak_preds;
};

UnsupResult mean_teacher_unsup(BranchState& branch,
                               const std::vector<TrainItem>& unlabeled,
                               const SslHyper& hyper, const TaskMeta& meta) {
  if (!branch.teacher)
    throw ShapeError("consistency training requires a teacher model");
  UnsupResult r;
  const int b = static_cast<int>(unlabeled.size());
  if (meta.task == Task::classification) {
    std::vector<Tensor> prob_nodes;
    std::vector<std::vector<double>> targets;
    std::vector<char> mask;
    for (const auto& item : unlabeled) {
      std::vector<double> teacher_probs;
      {
        NoGradGuard ng;
        teacher_probs = prob_values(branch.teacher->forward(item.weak.image).output);
      }
      Tensor logits = branch.model.forward(item.strong.image).output;
      Tensor probs = softmax(logits);
      const double t_conf = max_value(teacher_probs);
      const double s_conf = max_value(probs.values());
      const bool keep =
          t_conf > s_conf && (!hyper.mt_require_tau || t_conf >= hyper.tau);
      prob_nodes.push_back(probs);
      targets.push_back(teacher_probs);
      mask.push_back(keep ? 1 : 0);
      if (keep) ++r.accepted;
      r.strong_outputs.push_back(logits);
      r.weak_preds.push_back(std::move(teacher_probs));
    }
    r.l_unsup = masked_prob_consistency(prob_nodes, targets, mask, b);
  } else {
    std::vector<Tensor> hm_nodes;
    std::vector<std::vector<double>> targets;
    std::vector<std::vector<char>> masks;
    for (const auto& item : unlabeled) {
      Tensor teacher_hm, aligned;
      std::vector<double> t_conf;
      {
        NoGradGuard ng;
        teacher_hm = branch.teacher->forward(item.weak.image).output;
        t_conf = keypoint_confidences(teacher_hm);
        aligned = align_prediction(teacher_hm, item.weak.record,
                                   item.strong.record, meta.flip_map);
      }
      Tensor student_hm = branch.model.forward(item.strong.image).output;
      std::vector<double> s_conf = keypoint_confidences(student_hm);
      std::vector<char> mask(t_conf.size());
      for (size_t k = 0; k < t_conf.size(); ++k) {
        mask[k] = (t_conf[k] > s_conf[k] &&
                   (!hyper.mt_require_tau || t_conf[k] >= hyper.tau))
                      ? 1
                      : 0;
        if (mask[k]) ++r.accepted;
      }
      hm_nodes.push_back(student_hm);
      targets.push_back(aligned.values());
      masks.push_back(std::move(mask));
      r.strong_outputs.push_back(student_hm);
      r.weak_preds.push_back(teacher_hm.values());
    }
    r.l_unsup = masked_heatmap_mse(hm_nodes, targets, masks, b);
  }
  return r;
}

UnsupResult fixmatch_unsup(BranchState& branch,
                           const std::vector<TrainItem>& unlabeled,
                           const SslHyper& hyper, const TaskMeta& meta) {
  if (meta.task != Task::classification)
    throw ShapeError("hard pseudo-label training applies to classification");
  UnsupResult r;
  std::vector<Tensor> logit_nodes;
  std::vector<int> hard;
  std::vector<char> mask;
  for (const auto& item : unlabeled) {
    std::vector<double> weak_probs;
    {
      NoGradGuard ng;
      weak_probs = prob_values(branch.model.forward(item.weak.image).output);
    }
    Tensor logits = branch.model.forward(item.strong.image).output;
    const bool keep = max_value(weak_probs) >= hyper.tau;
    logit_nodes.push_back(logits);
    hard.push_back(argmax_index(weak_probs));
    mask.push_back(keep ? 1 : 0);
    if (keep) ++r.accepted;
    r.strong_outputs.push_back(logits);
    r.weak_preds.push_back(std::move(weak_probs));
  }
  r.l_unsup = masked_hard_cross_entropy(logit_nodes, hard, mask,
                                        static_cast<int>(unlabeled.size()));
  return r;
}

UnsupResult dualpose_unsup(BranchState& branch,
                           const std::vector<TrainItem>& unlabeled,
                           const SslHyper& hyper, const TaskMeta& meta) {
  if (meta.task != Task::regression)
    throw ShapeError("easy/hard heatmap training applies to pose regression");
  UnsupResult r;
  std::vector<Tensor> hm_nodes;
  std::vector<std::vector<double>> targets;
  std::vector<std::vector<char>> masks;
  for (const auto& item : unlabeled) {
    Tensor easy_hm, aligned;
    std::vector<double> conf;
    {
      NoGradGuard ng;
      easy_hm = branch.model.forward(item.weak.image).output;
      conf = keypoint_confidences(easy_hm);
      aligned = align_prediction(easy_hm, item.weak.record, item.strong.record,
                                 meta.flip_map);
    }
    Tensor hard_hm = branch.model.forward(item.strong.image).output;
    std::vector<char> mask(conf.size());
    for (size_t k = 0; k < conf.size(); ++k) {
      mask[k] = conf[k] >= hyper.tau ? 1 : 0;
      if (mask[k]) ++r.accepted;
    }
    hm_nodes.push_back(hard_hm);
    targets.push_back(aligned.values());
    masks.push_back(std::move(mask));
    r.strong_outputs.push_back(hard_hm);
    r.weak_preds.push_back(easy_hm.values());
  }
  r.l_unsup = masked_heatmap_mse(hm_nodes, targets, masks,
                                 static_cast<int>(unlabeled.size()));
  return r;
}

// Inference-only passes for a branch that has no unsupervised loss of its
// own but still participates in ensemble pseudo-labeling.
UnsupResult supervised_pseudo_context(BranchState& branch,
                                      const std::vector<TrainItem>& unlabeled,
                                      const TaskMeta& meta) {
  UnsupResult r;
  r.l_unsup = Tensor::scalar(0.0);
  for (const auto& item : unlabeled) {
    {
      NoGradGuard ng;
      Tensor weak_out = branch.model.forward(item.weak.image).output;
      if (meta.task == Task::classification)
        r.weak_preds.push_back(prob_values(weak_out));
      else
        r.weak_preds.push_back(weak_out.values());
    }
    r.strong_outputs.push_back(branch.model.forward(item.strong.image).output);
  }
  return r;
}

}  // namespace

SslTerms build_ssl_terms(BranchState& branch,
                         const std::vector<TrainItem>& labeled,
                         const std::vector<TrainItem>& unlabeled,
                         const SslHyper& hyper, const TaskMeta& meta,
                         bool pseudo_context) {
  if (labeled.empty())
    throw ShapeError("training step requires a non-empty labeled batch");
  if (meta.task != branch.model.spec().task)
    throw ShapeError("task does not match the branch model");
  if (!(hyper.tau >= 0.0 && hyper.tau <= 1.0))
    throw NumericError("confidence threshold must lie in [0, 1]");

  SslTerms out;
  std::vector<Tensor> sup_terms;
  for (const auto& item : labeled) {
    ModelForward fwd = branch.model.forward(item.weak.image);
    out.labeled_taps.push_back(fwd.tap);
    if (meta.task == Task::classification) {
      sup_terms.push_back(softmax_cross_entropy(
          fwd.output, onehot(fwd.output.size(), item.label)));
    } else {
      const Shape& s = fwd.output.shape();
      Tensor target =
          render_heatmap(item.weak.keypoints, meta.heatmap_sigma, s[1], s[2]);
      sup_terms.push_back(mse(fwd.output, target));
    }
  }
  out.l_sup = scale(sum_many(sup_terms), 1.0 / labeled.size());

  UnsupResult u;
  if (unlabeled.empty()) {
    u.l_unsup = Tensor::scalar(0.0);
  } else {
    switch (branch.method) {
      case Method::supervised:
        u = pseudo_context ? supervised_pseudo_context(branch, unlabeled, meta)
                           : UnsupResult{Tensor::scalar(0.0), 0, {}, {}};
        break;
      case Method::mean_teacher:
        u = mean_teacher_unsup(branch, unlabeled, hyper, meta);
        break;
      case Method::fixmatch:
        u = fixmatch_unsup(branch, unlabeled, hyper, meta);
        break;
      case Method::dualpose:
        u = dualpose_unsup(branch, unlabeled, hyper, meta);
        break;
    }
  }
  out.l_unsup = u.l_unsup;
  out.accepted = u.accepted;
  out.strong_outputs = std::move(u.strong_outputs);
  out.weak_pred_values = std::move(u.weak_preds);
  return out;
}

LossBreakdown branch_train_step(BranchState& branch,
                                const std::vector<TrainItem>& labeled,
                                const std::vector<TrainItem>& unlabeled,
                                const SslHyper& hyper, const TaskMeta& meta,
                                double lambda_ssl) {
  if (lambda_ssl < 0.0)
    throw NumericError("loss weights must be non-negative");
  SslTerms terms = build_ssl_terms(branch, labeled, unlabeled, hyper, meta);
  Tensor l_ssl = add(terms.l_sup, terms.l_unsup);
  Tensor total = scale(l_ssl, lambda_ssl);
  branch.model.zero_grad();
  backward(total);
  branch.opt.step();
  if (branch.teacher) ema_update(*branch.teacher, branch.model, hyper.ema_decay);
  branch.step += 1;

  LossBreakdown bd;
  bd.l_sup = terms.l_sup.value();
  bd.l_unsup = terms.l_unsup.value();
  bd.l_ssl = l_ssl.value();
  bd.total = total.value();
  bd.accepted_pseudo_count = terms.accepted;
  return bd;
}

}  // namespace ubpl
