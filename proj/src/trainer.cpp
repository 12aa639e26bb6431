#include "ubpl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <utility>

#include "json.hpp"
#include "ubpl/augment.hpp"
#include "ubpl/io.hpp"
#include "ubpl/rng.hpp"

namespace ubpl {
namespace {

namespace fs = std::filesystem;

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> softmax_values(const std::vector<double>& logits) {
  double hi = logits[0];
  for (double v : logits) hi = std::max(hi, v);
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

Shape output_shape(const Model& m) {
  const ModelSpec& s = m.spec();
  if (s.task == Task::classification) return {s.num_outputs};
  return {s.num_outputs, s.height, s.width};
}

// Ensemble (or single-model) hard predictions on un-augmented images.
std::vector<int> predicted_classes(const std::vector<std::vector<double>>& pa,
                                   const std::vector<std::vector<double>>& pb) {
  std::vector<int> out;
  for (size_t i = 0; i < pa.size(); ++i) {
    int best = 0;
    double best_v = -1.0;
    for (size_t k = 0; k < pa[i].size(); ++k) {
      double v = 0.5 * (pa[i][k] + pb[i][k]);
      if (v > best_v) {
        best_v = v;
        best = static_cast<int>(k);
      }
    }
    out.push_back(best);
  }
  return out;
}

double eval_from_outputs(const Model& model,
                         const std::vector<std::vector<double>>& pa,
                         const std::vector<std::vector<double>>& pb,
                         const Dataset& eval_set) {
  if (model.spec().task == Task::classification) {
    std::vector<int> truth;
    for (const auto& s : eval_set.samples) truth.push_back(s.class_label);
    return error_rate(predicted_classes(pa, pb), truth);
  }
  const Shape shape = output_shape(model);
  double total = 0.0;
  int counted = 0;
  for (size_t i = 0; i < pa.size(); ++i) {
    bool any_visible = false;
    for (const auto& kp : eval_set.samples[i].keypoints)
      any_visible = any_visible || kp.visible;
    if (!any_visible) continue;
    std::vector<double> mean(pa[i].size());
    for (size_t j = 0; j < mean.size(); ++j)
      mean[j] = 0.5 * (pa[i][j] + pb[i][j]);
    auto decoded = decode_heatmap(Tensor::leaf(shape, std::move(mean)));
    total += keypoint_mse(decoded, eval_set.samples[i].keypoints);
    ++counted;
  }
  if (counted == 0)
    throw ShapeError("evaluation set has no visible keypoints");
  return total / counted;
}

std::vector<Tensor> dataset_images(const Dataset& d) {
  std::vector<Tensor> out;
  for (const auto& s : d.samples) out.push_back(s.image);
  return out;
}

std::vector<Tensor> unlabeled_images(const UnlabeledSet& u) {
  std::vector<Tensor> out;
  for (int i = 0; i < u.size(); ++i) out.push_back(u.image(i));
  return out;
}

// The models whose (possibly combined) prediction acts as the run's
// pseudo-labeler: both branches for UBPL, the teacher for Mean Teacher,
// the model itself otherwise. Empty for plain supervised runs.
std::vector<const Model*> pseudo_providers(const BranchState& a,
                                           const BranchState* b) {
  if (b) return {&a.model, &b->model};
  switch (a.method) {
    case Method::supervised: return {};
    case Method::mean_teacher: return {&*a.teacher};
    default: return {&a.model};
  }
}

struct EpochSums {
  LossBreakdown sum{};
  int steps = 0;
  void add(const LossBreakdown& b) {
    sum.l_sup += b.l_sup;
    sum.l_unsup += b.l_unsup;
    sum.l_ssl += b.l_ssl;
    sum.l_pse += b.l_pse;
    sum.l_fd += b.l_fd;
    sum.total += b.total;
    sum.accepted_pseudo_count += b.accepted_pseudo_count;
    ++steps;
  }
};

void log_epoch_losses(MetricsLogger& log, const std::string& run_id,
                      int epoch, int step, const EpochSums& es,
                      const std::string& suffix) {
  const double n = es.steps;
  log.log(run_id, epoch, step, "train", "loss_sup" + suffix, es.sum.l_sup / n);
  log.log(run_id, epoch, step, "train", "loss_unsup" + suffix,
          es.sum.l_unsup / n);
  log.log(run_id, epoch, step, "train", "loss_ssl" + suffix, es.sum.l_ssl / n);
  log.log(run_id, epoch, step, "train", "loss_pse" + suffix, es.sum.l_pse / n);
  log.log(run_id, epoch, step, "train", "loss_fd" + suffix, es.sum.l_fd / n);
  log.log(run_id, epoch, step, "train", "loss_total" + suffix,
          es.sum.total / n);
  log.log(run_id, epoch, step, "train", "accepted_pseudo" + suffix,
          es.sum.accepted_pseudo_count / n);
}

uint64_t branch_init_seed(const ExperimentConfig& cfg, uint64_t sub) {
  return derive_seed(cfg.seed, Streams::model_init, sub);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  Dataset pool =
      cfg.task == Task::classification
          ? gen_classification(cfg.dataset.size, cfg.dataset.classes,
                               cfg.dataset.image_size, cfg.dataset.seed)
          : gen_keypoints(cfg.dataset.size, cfg.dataset.keypoints,
                          cfg.dataset.image_size, cfg.dataset.seed);
  auto [labeled, unlabeled] = split_labeled(pool, cfg.split_spec());
  const uint64_t eval_seed =
      derive_seed(cfg.dataset.seed, Streams::dataset_gen, 0xE7A1);
  data.eval = cfg.task == Task::classification
                  ? gen_classification(cfg.dataset.eval_size,
                                       cfg.dataset.classes,
                                       cfg.dataset.image_size, eval_seed)
                  : gen_keypoints(cfg.dataset.eval_size, cfg.dataset.keypoints,
                                  cfg.dataset.image_size, eval_seed);
  data.labeled = std::move(labeled);
  data.unlabeled = std::move(unlabeled);
  return data;
}

std::vector<int> select_batch(uint64_t run_seed, int epoch, int step,
                              bool unlabeled_pool, int pool_size, int count) {
  if (pool_size < 1) throw ShapeError("batch selection from an empty pool");
  Rng rng = derive_stream(run_seed, Streams::batch_select,
                          static_cast<uint64_t>(epoch),
                          static_cast<uint64_t>(step), unlabeled_pool ? 1 : 0);
  std::vector<int> idx;
  for (int i = 0; i < count; ++i) idx.push_back(rng.uniform_int(0, pool_size - 1));
  return idx;
}

TrainItem make_labeled_item(const LabeledSample& s, int pool_index, int slot,
                            const TaskMeta& meta, uint64_t run_seed, int epoch,
                            int step) {
  TrainItem item;
  item.id = pool_index;
  item.label = s.class_label;
  Rng weak_rng = derive_stream(run_seed, Streams::augment,
                               static_cast<uint64_t>(epoch),
                               static_cast<uint64_t>(step),
                               static_cast<uint64_t>(slot), 0, 0);
  Rng strong_rng = derive_stream(run_seed, Streams::augment,
                                 static_cast<uint64_t>(epoch),
                                 static_cast<uint64_t>(step),
                                 static_cast<uint64_t>(slot), 1, 0);
  AugmentResult w =
      weak_augment(s.image, s.keypoints, meta.task, meta.flip_map, weak_rng);
  AugmentResult st = strong_augment(s.image, s.keypoints, meta.task,
                                    meta.flip_map, strong_rng);
  item.weak = {w.image, std::move(w.keypoints), w.record};
  item.strong = {st.image, std::move(st.keypoints), st.record};
  return item;
}

TrainItem make_unlabeled_item(const Tensor& image, int pool_index, int slot,
                              const TaskMeta& meta, uint64_t run_seed,
                              int epoch, int step) {
  TrainItem item;
  item.id = pool_index;
  Rng weak_rng = derive_stream(run_seed, Streams::augment,
                               static_cast<uint64_t>(epoch),
                               static_cast<uint64_t>(step),
                               static_cast<uint64_t>(slot), 0, 1);
  Rng strong_rng = derive_stream(run_seed, Streams::augment,
                                 static_cast<uint64_t>(epoch),
                                 static_cast<uint64_t>(step),
                                 static_cast<uint64_t>(slot), 1, 1);
  // No keypoints ride along, so no flip map is needed; the view record still
  // captures the transform for later heatmap alignment.
  AugmentResult w = weak_augment(image, {}, meta.task, {}, weak_rng);
  AugmentResult st = strong_augment(image, {}, meta.task, {}, strong_rng);
  item.weak = {w.image, {}, w.record};
  item.strong = {st.image, {}, st.record};
  return item;
}

std::vector<std::vector<double>> predict_outputs(
    const Model& model, const std::vector<Tensor>& images) {
  NoGradGuard guard;
  std::vector<std::vector<double>> out;
  for (const auto& img : images) {
    ModelForward f = model.forward(img);
    if (model.spec().task == Task::classification)
      out.push_back(softmax_values(f.output.values()));
    else
      out.push_back(f.output.values());
  }
  return out;
}

double evaluate_model(const Model& model, const Dataset& eval_set) {
  auto p = predict_outputs(model, dataset_images(eval_set));
  return eval_from_outputs(model, p, p, eval_set);
}

double evaluate_ensemble(const Model& a, const Model& b,
                         const Dataset& eval_set) {
  auto imgs = dataset_images(eval_set);
  return eval_from_outputs(a, predict_outputs(a, imgs),
                           predict_outputs(b, imgs), eval_set);
}

std::string eval_metric_name(Task task) {
  return task == Task::classification ? "error_rate" : "keypoint_mse";
}

RunPaths run_paths(const std::string& out_dir) {
  RunPaths p;
  p.dir = out_dir;
  p.config = out_dir + "/config.conf";
  p.metrics = out_dir + "/metrics.csv";
  p.checkpoint = out_dir + "/checkpoint.bin";
  return p;
}

PseudoQuality pseudo_quality(const std::vector<const Model*>& providers,
                             const UnlabeledSet& unlabeled,
                             const TaskMeta& meta, double tau) {
  PseudoQuality q;
  if (providers.empty() || unlabeled.size() == 0) return q;
  auto imgs = unlabeled_images(unlabeled);
  auto pa = predict_outputs(*providers[0], imgs);
  auto pb = providers.size() > 1 ? predict_outputs(*providers[1], imgs) : pa;
  const Shape shape = output_shape(*providers[0]);
  PseudoLabelBatch plb = combine_pseudo_labels(pa, pb, shape, tau);

  double err_sum = 0.0;
  int err_count = 0;
  for (int i = 0; i < unlabeled.size(); ++i) {
    const PseudoEntry& e = plb.entries[i];
    const LabeledSample& gt = unlabeled.diagnostics_ground_truth(i);
    if (meta.task == Task::classification) {
      if (!e.accepted[0]) continue;
      ++q.accepted;
      err_sum += e.hard_label == gt.class_label ? 0.0 : 100.0;
      ++err_count;
    } else {
      auto decoded = decode_heatmap(Tensor::leaf(shape, e.prediction));
      for (size_t c = 0; c < e.accepted.size(); ++c) {
        if (!e.accepted[c]) continue;
        ++q.accepted;
        if (!gt.keypoints[c].visible) continue;
        const double dx = decoded[c].x - gt.keypoints[c].x;
        const double dy = decoded[c].y - gt.keypoints[c].y;
        err_sum += dx * dx + dy * dy;
        ++err_count;
      }
    }
  }
  if (err_count > 0) {
    q.has_error = true;
    q.error = err_sum / err_count;
  }
  return q;
}

RunSummary run_experiment(const ExperimentConfig& cfg,
                          const std::string& out_dir) {
  validate_config(cfg);
  RunPaths paths = run_paths(out_dir);
  fs::create_directories(paths.dir);
  if (fs::exists(paths.metrics))
    throw ConfigError("run directory already holds a metrics file: " +
                      paths.metrics);
  {
    std::ofstream snap(paths.config, std::ios::trunc);
    if (!snap) throw ConfigError("cannot write config snapshot " + paths.config);
    snap << config_to_text(cfg);
  }

  ExperimentData data = prepare_data(cfg);
  const TaskMeta meta = cfg.task_meta(data.labeled.flip_map);
  const bool ubpl = cfg.ubpl.enabled;

  std::string run_id = method_name(cfg.method);
  if (ubpl) run_id += cfg.ubpl.fd_enabled ? "+ubpl" : "+ubpl-nofd";
  run_id += "_s" + std::to_string(cfg.seed);

  // UBPL runs keep both branches inside the ensemble state; standalone runs
  // keep the single branch directly. branch_a/branch_b view whichever holds.
  std::optional<EnsembleState> es;
  std::optional<BranchState> solo;
  if (ubpl)
    es.emplace(EnsembleState{
        BranchState(cfg.method,
                    Model(cfg.model_spec(branch_init_seed(cfg, cfg.ubpl.seed_a))),
                    cfg.optim_spec()),
        BranchState(cfg.method,
                    Model(cfg.model_spec(branch_init_seed(cfg, cfg.ubpl.seed_b))),
                    cfg.optim_spec()),
        cfg.ensemble_hyper()});
  else
    solo.emplace(cfg.method,
                 Model(cfg.model_spec(branch_init_seed(cfg, cfg.ubpl.seed_a))),
                 cfg.optim_spec());
  BranchState& branch_a = ubpl ? es->a : *solo;
  BranchState* branch_b = ubpl ? &es->b : nullptr;

  MetricsLogger log(paths.metrics);
  RunSummary summary;
  summary.paths = paths;
  summary.run_id = run_id;

  const int unlabeled_batch = cfg.batch.labeled * cfg.batch.unlabeled_ratio;
  const SslHyper hyper = cfg.ssl_hyper();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochSums sums_a, sums_b;
    for (int step = 1; step <= cfg.steps_per_epoch; ++step) {
      std::vector<TrainItem> litems;
      {
        auto sel = select_batch(cfg.seed, epoch, step, false,
                                data.labeled.size(), cfg.batch.labeled);
        for (int slot = 0; slot < static_cast<int>(sel.size()); ++slot)
          litems.push_back(make_labeled_item(data.labeled.samples[sel[slot]],
                                             sel[slot], slot, meta, cfg.seed,
                                             epoch, step));
      }
      std::vector<TrainItem> uitems;
      if (unlabeled_batch > 0 && data.unlabeled.size() > 0) {
        auto sel = select_batch(cfg.seed, epoch, step, true,
                                data.unlabeled.size(), unlabeled_batch);
        for (int slot = 0; slot < static_cast<int>(sel.size()); ++slot)
          uitems.push_back(make_unlabeled_item(data.unlabeled.image(sel[slot]),
                                               sel[slot], slot, meta, cfg.seed,
                                               epoch, step));
      }
      if (ubpl) {
        auto [ba, bb] = ubpl_train_step(*es, litems, uitems, meta);
        sums_a.add(ba);
        sums_b.add(bb);
      } else {
        sums_a.add(branch_train_step(branch_a, litems, uitems, hyper, meta,
                                     cfg.ubpl.lambda_ssl));
      }
    }

    const int gstep = epoch * cfg.steps_per_epoch;
    const std::string metric = eval_metric_name(cfg.task);
    double epoch_eval;
    if (ubpl) {
      log_epoch_losses(log, run_id, epoch, gstep, sums_a, "_a");
      log_epoch_losses(log, run_id, epoch, gstep, sums_b, "_b");
      log.log(run_id, epoch, gstep, "eval", metric + "_a",
              evaluate_model(branch_a.model, data.eval));
      log.log(run_id, epoch, gstep, "eval", metric + "_b",
              evaluate_model(branch_b->model, data.eval));
      epoch_eval = evaluate_ensemble(branch_a.model, branch_b->model, data.eval);
      log.log(run_id, epoch, gstep, "eval", metric + "_ensemble", epoch_eval);
    } else {
      log_epoch_losses(log, run_id, epoch, gstep, sums_a, "");
      epoch_eval = evaluate_model(branch_a.model, data.eval);
      log.log(run_id, epoch, gstep, "eval", metric, epoch_eval);
    }
    summary.eval_history.push_back(epoch_eval);

    auto providers = pseudo_providers(branch_a, branch_b);
    if (!providers.empty()) {
      PseudoQuality q =
          pseudo_quality(providers, data.unlabeled, meta, hyper.tau);
      log.log(run_id, epoch, gstep, "diag", "pseudo_accepted",
              static_cast<double>(q.accepted));
      if (q.has_error)
        log.log(run_id, epoch, gstep, "diag", "pseudo_error", q.error);
    }
    log.flush();
  }

  Checkpoint cp = branch_checkpoint(branch_a, "a.");
  if (ubpl) {
    Checkpoint cb = branch_checkpoint(*branch_b, "b.");
    cp.insert(cp.end(), cb.begin(), cb.end());
  }
  save_checkpoint(paths.checkpoint, cp);

  summary.final_eval = summary.eval_history.back();
  return summary;
}

LoadedRun load_run(const std::string& run_dir) {
  RunPaths paths = run_paths(run_dir);
  LoadedRun lr{load_config(paths.config), {}};
  if (!fs::exists(paths.checkpoint))
    throw ConfigError("run has no checkpoint: " + paths.checkpoint);
  Checkpoint cp = load_checkpoint(paths.checkpoint);
  lr.branches.emplace_back(
      lr.cfg.method,
      Model(lr.cfg.model_spec(branch_init_seed(lr.cfg, lr.cfg.ubpl.seed_a))),
      lr.cfg.optim_spec());
  restore_branch(lr.branches[0], cp, "a.");
  if (lr.cfg.ubpl.enabled) {
    lr.branches.emplace_back(
        lr.cfg.method,
        Model(lr.cfg.model_spec(branch_init_seed(lr.cfg, lr.cfg.ubpl.seed_b))),
        lr.cfg.optim_spec());
    restore_branch(lr.branches[1], cp, "b.");
  }
  return lr;
}

DiagnoseArtifacts diagnose_run(const std::string& run_dir,
                               const std::string& out_dir,
                               const DiagnoseOptions& opt) {
  LoadedRun lr = load_run(run_dir);
  ExperimentData data = prepare_data(lr.cfg);
  if (data.unlabeled.size() == 0)
    throw ConfigError(
        "diagnose needs an unlabeled partition, but this run's split has "
        "none (dataset.labeled == dataset.size)");
  const TaskMeta meta = lr.cfg.task_meta(data.labeled.flip_map);

  std::vector<const Model*> providers = pseudo_providers(
      lr.branches[0], lr.branches.size() > 1 ? &lr.branches[1] : nullptr);
  if (providers.empty()) providers = {&lr.branches[0].model};

  // Confidence vs true outcome of the run's pseudo-labeler, unthresholded.
  auto imgs = unlabeled_images(data.unlabeled);
  auto pa = predict_outputs(*providers[0], imgs);
  auto pb = providers.size() > 1 ? predict_outputs(*providers[1], imgs) : pa;
  const Shape shape = output_shape(*providers[0]);
  PseudoLabelBatch plb = combine_pseudo_labels(pa, pb, shape, /*tau=*/0.0);
  std::vector<double> confidence, outcome;
  for (int i = 0; i < data.unlabeled.size(); ++i) {
    const PseudoEntry& e = plb.entries[i];
    const LabeledSample& gt = data.unlabeled.diagnostics_ground_truth(i);
    if (meta.task == Task::classification) {
      confidence.push_back(e.confidence[0]);
      outcome.push_back(e.hard_label == gt.class_label ? 0.0 : 1.0);
    } else {
      auto decoded = decode_heatmap(Tensor::leaf(shape, e.prediction));
      for (size_t c = 0; c < e.confidence.size(); ++c) {
        if (!gt.keypoints[c].visible) continue;
        const double dx = decoded[c].x - gt.keypoints[c].x;
        const double dy = decoded[c].y - gt.keypoints[c].y;
        confidence.push_back(e.confidence[c]);
        outcome.push_back(dx * dx + dy * dy);
      }
    }
  }
  auto bins = calibration_curve(confidence, outcome, opt.bins);

  fs::create_directories(out_dir);
  DiagnoseArtifacts art;
  art.calibration_csv = out_dir + "/calibration.csv";
  {
    std::ofstream out(art.calibration_csv, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + art.calibration_csv);
    out << "bin_lo,bin_hi,count,mean_confidence,mean_outcome\n";
    for (const auto& b : bins) {
      out << fmt_g17(b.lo) << "," << fmt_g17(b.hi) << "," << b.count << ","
          << fmt_g17(b.mean_confidence) << "," << fmt_g17(b.mean_outcome)
          << "\n";
      if (b.count > 0) ++art.nonempty_bins;
    }
  }

  // Variance/covariance structure of the run's predictor ensemble on the
  // held-out set: both branches of a twin run, the student-teacher pair of a
  // mean-teacher run, or the single model otherwise. Each predictor
  // contributes one long series of output values.
  std::vector<const Model*> report_models;
  if (lr.branches.size() > 1) {
    report_models = {&lr.branches[0].model, &lr.branches[1].model};
  } else if (lr.branches[0].teacher) {
    report_models = {&lr.branches[0].model, &*lr.branches[0].teacher};
  } else {
    report_models = {&lr.branches[0].model};
  }
  std::vector<std::vector<double>> rows;
  auto eval_imgs = dataset_images(data.eval);
  for (const Model* m : report_models) {
    std::vector<double> series;
    for (auto& v : predict_outputs(*m, eval_imgs))
      series.insert(series.end(), v.begin(), v.end());
    rows.push_back(std::move(series));
  }
  VarianceDecomposition vd = variance_decomposition(rows);
  ChebyshevBound bound = chebyshev_bound(vd.mean_variance, opt.epsilon);

  std::vector<double> mean_series(rows[0].size(), 0.0);
  for (const auto& r : rows)
    for (size_t i = 0; i < r.size(); ++i) mean_series[i] += r[i];
  for (double& v : mean_series) v /= rows.size();
  double mu = 0.0;
  for (double v : mean_series) mu += v;
  mu /= mean_series.size();
  int tail = 0;
  for (double v : mean_series)
    if (std::abs(v - mu) >= opt.epsilon) ++tail;

  nlohmann::json j;
  j["t"] = vd.t;
  j["n"] = vd.n;
  j["epsilon"] = opt.epsilon;
  j["var_terms"] = vd.row_variances;
  j["covar_terms"] = vd.pair_covariances;
  j["variance_term"] = vd.variance_term;
  j["covariance_term"] = vd.covariance_term;
  j["ensemble_variance"] = vd.mean_variance;
  j["bound"] = bound.raw;
  j["empirical_tail"] = static_cast<double>(tail) / mean_series.size();
  art.chebyshev_json = out_dir + "/chebyshev.json";
  {
    std::ofstream out(art.chebyshev_json, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + art.chebyshev_json);
    out << j.dump(2) << "\n";
  }
  return art;
}

AblationResult run_ablation(const ExperimentConfig& base,
                            const std::string& out_dir) {
  struct Arm {
    const char* name;
    bool ubpl;
    bool fd;
  };
  const Arm arms[] = {{"baseline", false, false},
                      {"ubpl_nofd", true, false},
                      {"ubpl", true, true}};
  fs::create_directories(out_dir);
  AblationResult result;
  for (const Arm& arm : arms) {
    std::vector<double> finals;
    for (uint64_t seed : base.multi_seeds) {
      ExperimentConfig cfg = base;
      cfg.ubpl.enabled = arm.ubpl;
      cfg.ubpl.fd_enabled = arm.fd;
      cfg.seed = seed;
      std::string dir =
          out_dir + "/" + arm.name + "_s" + std::to_string(seed);
      RunSummary rs = run_experiment(cfg, dir);
      result.rows.push_back({arm.name, seed, rs.final_eval});
      finals.push_back(rs.final_eval);
    }
    double mean = 0.0;
    for (double v : finals) mean += v;
    mean /= finals.size();
    double var = 0.0;
    for (double v : finals) var += (v - mean) * (v - mean);
    var /= finals.size();
    result.summary.push_back(
        {arm.name, mean, std::sqrt(var), median_of(finals)});
  }

  result.rows_csv = out_dir + "/ablation_runs.csv";
  {
    std::ofstream out(result.rows_csv, std::ios::trunc);
    out << "arm,seed,final_metric\n";
    for (const auto& r : result.rows)
      out << r.arm << "," << r.seed << "," << fmt_g17(r.final_eval) << "\n";
  }
  result.summary_csv = out_dir + "/ablation_summary.csv";
  {
    std::ofstream out(result.summary_csv, std::ios::trunc);
    out << "arm,mean,stddev,median\n";
    for (const auto& s : result.summary)
      out << s.arm << "," << fmt_g17(s.mean) << "," << fmt_g17(s.stddev)
          << "," << fmt_g17(s.median) << "\n";
  }
  return result;
}

}  // namespace ubpl
