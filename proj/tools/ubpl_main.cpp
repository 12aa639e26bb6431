#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ubpl/config.hpp"
#include "ubpl/trainer.hpp"

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --seed is sugar for one more `--set seed=N`, applied last so it wins.
std::vector<std::string> with_seed(std::vector<std::string> overrides,
                                   const std::string& seed) {
  if (!seed.empty()) overrides.push_back("seed=" + seed);
  return overrides;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::string& out_dir) {
  ubpl::ExperimentConfig cfg = ubpl::load_config(config_path, overrides);
  ubpl::RunSummary rs = ubpl::run_experiment(cfg, out_dir);
  std::cout << "run " << rs.run_id << "\n"
            << "  config     " << rs.paths.config << "\n"
            << "  metrics    " << rs.paths.metrics << "\n"
            << "  checkpoint " << rs.paths.checkpoint << "\n"
            << "final " << ubpl::eval_metric_name(cfg.task) << " "
            << g17(rs.final_eval) << "\n";
  return 0;
}

int cmd_eval(const std::string& run_dir) {
  ubpl::LoadedRun lr = ubpl::load_run(run_dir);
  ubpl::ExperimentData data = ubpl::prepare_data(lr.cfg);
  const std::string metric = ubpl::eval_metric_name(lr.cfg.task);
  if (lr.branches.size() == 2) {
    std::cout << metric << "_a "
              << g17(ubpl::evaluate_model(lr.branches[0].model, data.eval))
              << "\n"
              << metric << "_b "
              << g17(ubpl::evaluate_model(lr.branches[1].model, data.eval))
              << "\n"
              << metric << "_ensemble "
              << g17(ubpl::evaluate_ensemble(lr.branches[0].model,
                                             lr.branches[1].model, data.eval))
              << "\n";
  } else {
    std::cout << metric << " "
              << g17(ubpl::evaluate_model(lr.branches[0].model, data.eval))
              << "\n";
  }
  return 0;
}

int cmd_diagnose(const std::string& run_dir, const std::string& out_dir,
                 const ubpl::DiagnoseOptions& opt) {
  ubpl::DiagnoseArtifacts art = ubpl::diagnose_run(run_dir, out_dir, opt);
  std::cout << "calibration " << art.calibration_csv << " ("
            << art.nonempty_bins << " non-empty bins)\n"
            << "chebyshev   " << art.chebyshev_json << "\n";
  return 0;
}

int cmd_plot(const std::vector<std::string>& metrics_files,
             const std::string& metric, const std::string& out_file) {
  ubpl::plot_metric(metrics_files, metric, out_file);
  std::cout << "plot " << out_file << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path,
               const std::vector<std::string>& overrides,
               const std::string& out_dir) {
  ubpl::ExperimentConfig base = ubpl::load_config(config_path, overrides);
  ubpl::AblationResult res = ubpl::run_ablation(base, out_dir);
  const std::string metric = ubpl::eval_metric_name(base.task);
  std::cout << "arm        mean " << metric << "   stddev      median\n";
  for (const auto& s : res.summary) {
    std::printf("%-10s %-12.6g %-11.6g %-.6g\n", s.arm.c_str(), s.mean,
                s.stddev, s.median);
  }
  std::cout << "rows    " << res.rows_csv << "\n"
            << "summary " << res.summary_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised training lab: two-branch ensemble "
               "pseudo-labeling with feature decorrelation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir, seed, metric = "loss_total";
  std::vector<std::string> overrides, metrics_files;
  ubpl::DiagnoseOptions dopt;

  CLI::App* train = app.add_subcommand("train", "run one experiment");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--set", overrides, "override, key=value (repeatable)");
  train->add_option("--seed", seed, "override the run seed");
  train->add_option("--out", out_dir, "run directory to create")->required();

  CLI::App* eval = app.add_subcommand("eval", "re-evaluate a finished run");
  eval->add_option("run_dir", run_dir, "run directory")->required();

  CLI::App* diag = app.add_subcommand(
      "diagnose", "calibration curve and dispersion report for a run");
  diag->add_option("run_dir", run_dir, "run directory")->required();
  diag->add_option("--out", out_dir, "report directory")->required();
  diag->add_option("--epsilon", dopt.epsilon, "deviation threshold");
  diag->add_option("--bins", dopt.bins, "calibration bins");

  CLI::App* plot = app.add_subcommand("plot", "metric-vs-epoch SVG chart");
  plot->add_option("metrics", metrics_files, "metrics CSV file(s)")
      ->required();
  plot->add_option("--metric", metric, "metric name to chart");
  plot->add_option("--out", out_dir, "output SVG path")->required();

  CLI::App* ablate = app.add_subcommand(
      "ablate", "baseline / twin(noFD) / twin arms over the seed set");
  ablate->add_option("--config", config_path, "config file")->required();
  ablate->add_option("--set", overrides, "override, key=value (repeatable)");
  ablate->add_option("--seed", seed, "override the run seed");
  ablate->add_option("--out", out_dir, "ablation directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path, with_seed(overrides, seed),
                                 out_dir);
    if (*eval) return cmd_eval(run_dir);
    if (*diag) return cmd_diagnose(run_dir, out_dir, dopt);
    if (*plot) return cmd_plot(metrics_files, metric, out_dir);
    if (*ablate) return cmd_ablate(config_path, with_seed(overrides, seed),
                                   out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
