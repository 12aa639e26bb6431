#include "ubpl/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace ubpl {

int PseudoLabelBatch::accepted_units() const {
  int n = 0;
  for (const auto& e : entries)
    n += static_cast<int>(std::count(e.accepted.begin(), e.accepted.end(), 1));
  return n;
}

PseudoLabelBatch combine_pseudo_labels(
    const std::vector<std::vector<double>>& preds_a,
    const std::vector<std::vector<double>>& preds_b, const Shape& pred_shape,
    double tau) {
  if (preds_a.size() != preds_b.size())
    throw ShapeError("pseudo-label combine: branch prediction counts differ");
  if (!(tau >= 0.0 && tau <= 1.0))
    throw NumericError("confidence threshold must lie in [0, 1]");
  if (pred_shape.size() != 1 && pred_shape.size() != 3)
    throw ShapeError("pseudo-label combine: predictions must be [K] or "
                     "[K, H, W]");
  size_t total = 1;
  for (int d : pred_shape) {
    if (d <= 0) throw ShapeError("pseudo-label combine: bad prediction shape");
    total *= static_cast<size_t>(d);
  }

  PseudoLabelBatch out;
  out.pred_shape = pred_shape;
  out.tau = tau;
  for (size_t i = 0; i < preds_a.size(); ++i) {
    if (preds_a[i].size() != total || preds_b[i].size() != total)
      throw ShapeError("pseudo-label combine: prediction length mismatch");
    PseudoEntry e;
    e.prediction.resize(total);
    for (size_t j = 0; j < total; ++j)
      e.prediction[j] = 0.5 * (preds_a[i][j] + preds_b[i][j]);
    if (pred_shape.size() == 1) {
      auto it = std::max_element(e.prediction.begin(), e.prediction.end());
      e.hard_label = static_cast<int>(it - e.prediction.begin());
      e.confidence = {*it};
    } else {
      Tensor hm = Tensor::leaf(pred_shape, e.prediction);
      for (const auto& p : decode_heatmap(hm))
        e.confidence.push_back(p.confidence);
    }
    e.accepted.resize(e.confidence.size());
    for (size_t j = 0; j < e.confidence.size(); ++j)
      e.accepted[j] = e.confidence[j] >= tau ? 1 : 0;
    out.entries.push_back(std::move(e));
  }
  return out;
}

Tensor fd_loss(const std::vector<FeatureTap>& taps_a,
               const std::vector<FeatureTap>& taps_b, double beta_fd) {
  if (taps_a.size() != taps_b.size())
    throw ShapeError("decorrelation loss: tap counts differ");
  if (taps_a.empty())
    throw ShapeError("decorrelation loss: needs at least one sample");
  if (beta_fd < 0.0)
    throw NumericError("decorrelation scale must be non-negative");
  std::vector<Tensor> cov_terms;
  for (size_t i = 0; i < taps_a.size(); ++i) {
    const Shape& sa = taps_a[i].feature.shape();
    const Shape& sb = taps_b[i].feature.shape();
    if (sa != sb)
      throw ShapeError("decorrelation loss: tap shapes differ between "
                       "branches");
    Tensor fa = taps_a[i].flat();
    Tensor fb = taps_b[i].flat();
    for (int c = 0; c < sa[0]; ++c)
      cov_terms.push_back(covariance(row(fa, c), row(fb, c)));
  }
  const double norm =
      beta_fd / (static_cast<double>(taps_a.size()) *
                 static_cast<double>(taps_a[0].feature.shape()[0]));
  return scale(sum_many(cov_terms), norm);
}

Tensor pseudo_label_loss(const std::vector<Tensor>& strong_outputs,
                         const PseudoLabelBatch& pseudo, const TaskMeta& meta,
                         const std::vector<TrainItem>& unlabeled) {
  const size_t b = strong_outputs.size();
  if (pseudo.entries.size() != b || unlabeled.size() != b)
    throw ShapeError("pseudo-label loss: batch size mismatch");
  if (b == 0) return Tensor::scalar(0.0);
  if (meta.task == Task::classification) {
    std::vector<int> hard;
    std::vector<char> mask;
    for (const auto& e : pseudo.entries) {
      hard.push_back(e.hard_label);
      mask.push_back(e.accepted[0]);
    }
    return masked_hard_cross_entropy(strong_outputs, hard, mask,
                                     static_cast<int>(b));
  }
  std::vector<std::vector<double>> targets;
  std::vector<std::vector<char>> masks;
  for (size_t i = 0; i < b; ++i) {
    const PseudoEntry& e = pseudo.entries[i];
    Tensor target;
    {
      NoGradGuard ng;
      target = align_prediction(Tensor::leaf(pseudo.pred_shape, e.prediction),
                                unlabeled[i].weak.record,
                                unlabeled[i].strong.record, meta.flip_map);
    }
    targets.push_back(target.values());
    masks.push_back(e.accepted);
  }
  return masked_heatmap_mse(strong_outputs, targets, masks,
                            static_cast<int>(b));
}

double weighted_total(double l_ssl, double l_pse, double l_fd,
                      double lambda_ssl, double lambda_pse, double lambda_fd) {
  if (lambda_ssl < 0.0 || lambda_pse < 0.0 || lambda_fd < 0.0)
    throw NumericError("loss weights must be non-negative");
  return lambda_ssl * l_ssl + lambda_pse * l_pse + lambda_fd * l_fd;
}

std::pair<LossBreakdown, LossBreakdown> ubpl_train_step(
    EnsembleState& es, const std::vector<TrainItem>& labeled,
    const std::vector<TrainItem>& unlabeled, const TaskMeta& meta) {
  const EnsembleHyper& h = es.hyper;
  if (h.lambda_ssl < 0.0 || h.lambda_pse < 0.0 || h.lambda_fd < 0.0)
    throw NumericError("loss weights must be non-negative");

  const bool want_pse = h.lambda_pse > 0.0 && !unlabeled.empty();
  SslTerms ta = build_ssl_terms(es.a, labeled, unlabeled, h.ssl, meta, want_pse);
  SslTerms tb = build_ssl_terms(es.b, labeled, unlabeled, h.ssl, meta, want_pse);

  Tensor l_ssl_a = add(ta.l_sup, ta.l_unsup);
  Tensor l_ssl_b = add(tb.l_sup, tb.l_unsup);
  Tensor total_a = scale(l_ssl_a, h.lambda_ssl);
  Tensor total_b = scale(l_ssl_b, h.lambda_ssl);

  std::optional<Tensor> l_pse_a, l_pse_b;
  int ensemble_accepted = 0;
  if (want_pse) {
    PseudoLabelBatch pl =
        combine_pseudo_labels(ta.weak_pred_values, tb.weak_pred_values,
                              ta.strong_outputs.front().shape(), h.ssl.tau);
    ensemble_accepted = pl.accepted_units();
    l_pse_a = pseudo_label_loss(ta.strong_outputs, pl, meta, unlabeled);
    l_pse_b = pseudo_label_loss(tb.strong_outputs, pl, meta, unlabeled);
    total_a = add(total_a, scale(*l_pse_a, h.lambda_pse));
    total_b = add(total_b, scale(*l_pse_b, h.lambda_pse));
  }

  std::optional<Tensor> l_fd;
  if (h.lambda_fd > 0.0) {
    l_fd = fd_loss(ta.labeled_taps, tb.labeled_taps, h.beta_fd);
    total_a = add(total_a, scale(*l_fd, h.lambda_fd));
    total_b = add(total_b, scale(*l_fd, h.lambda_fd));
  }

  auto zero_both = [&es] {
    es.a.model.zero_grad();
    es.b.model.zero_grad();
    if (es.a.teacher) es.a.teacher->zero_grad();
    if (es.b.teacher) es.b.teacher->zero_grad();
  };
  zero_both();
  backward(total_a);
  es.a.opt.step();
  zero_both();
  backward(total_b);
  es.b.opt.step();
  if (es.a.teacher) ema_update(*es.a.teacher, es.a.model, h.ssl.ema_decay);
  if (es.b.teacher) ema_update(*es.b.teacher, es.b.model, h.ssl.ema_decay);
  es.a.step += 1;
  es.b.step += 1;

  auto make_breakdown = [&](const SslTerms& t, const Tensor& l_ssl,
                            const std::optional<Tensor>& l_pse,
                            const Tensor& total) {
    LossBreakdown bd;
    bd.l_sup = t.l_sup.value();
    bd.l_unsup = t.l_unsup.value();
    bd.l_ssl = l_ssl.value();
    bd.l_pse = l_pse ? l_pse->value() : 0.0;
    bd.l_fd = l_fd ? l_fd->value() : 0.0;
    bd.total = total.value();
    bd.accepted_pseudo_count = want_pse ? ensemble_accepted : t.accepted;
    return bd;
  };
  return {make_breakdown(ta, l_ssl_a, l_pse_a, total_a),
          make_breakdown(tb, l_ssl_b, l_pse_b, total_b)};
}

}  // namespace ubpl
