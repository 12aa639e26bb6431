#include "ubpl/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ubpl {
namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& raw,
                            const std::string& want) {
  throw ConfigError("config key '" + key + "': cannot read '" + raw +
                    "' as " + want);
}

long long to_ll(const std::string& key, const std::string& raw) {
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(raw.c_str(), &end, 10);
  if (errno != 0 || end != raw.c_str() + raw.size() || raw.empty())
    bad_value(key, raw, "an integer");
  return v;
}

int to_int(const std::string& key, const std::string& raw) {
  long long v = to_ll(key, raw);
  if (v < INT_MIN || v > INT_MAX) bad_value(key, raw, "an integer");
  return static_cast<int>(v);
}

uint64_t to_u64(const std::string& key, const std::string& raw) {
  if (raw.empty() || raw[0] == '-') bad_value(key, raw, "a non-negative integer");
  errno = 0;
  char* end = nullptr;
  unsigned long long v = std::strtoull(raw.c_str(), &end, 10);
  if (errno != 0 || end != raw.c_str() + raw.size())
    bad_value(key, raw, "a non-negative integer");
  return v;
}

double to_double(const std::string& key, const std::string& raw) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(raw.c_str(), &end);
  if (errno != 0 || end != raw.c_str() + raw.size() || raw.empty() ||
      !std::isfinite(v))
    bad_value(key, raw, "a finite number");
  return v;
}

bool to_bool(const std::string& key, const std::string& raw) {
  if (raw == "true") return true;
  if (raw == "false") return false;
  bad_value(key, raw, "'true' or 'false'");
}

template <typename T, typename Parse>
std::vector<T> to_list(const std::string& key, const std::string& raw,
                       Parse parse) {
  std::vector<T> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse(key, trim(item)));
  if (out.empty()) bad_value(key, raw, "a comma-separated list");
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T, typename Fmt>
std::string fmt_list(const std::vector<T>& xs, Fmt fmt) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += fmt(xs[i]);
  }
  return out;
}

Task to_task(const std::string& key, const std::string& raw) {
  if (raw == "classification") return Task::classification;
  if (raw == "pose") return Task::regression;
  bad_value(key, raw, "'classification' or 'pose'");
}

Method to_method(const std::string& key, const std::string& raw) {
  if (raw == "supervised") return Method::supervised;
  if (raw == "mean_teacher") return Method::mean_teacher;
  if (raw == "fixmatch") return Method::fixmatch;
  if (raw == "dualpose") return Method::dualpose;
  bad_value(key, raw, "one of supervised|mean_teacher|fixmatch|dualpose");
}

struct KeySpec {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  // Default as source text; consulted after `task` is known so a few
  // defaults can follow the task.
  std::function<std::string(const ExperimentConfig&)> def;
};

std::function<std::string(const ExperimentConfig&)> fixed(std::string v) {
  return [v = std::move(v)](const ExperimentConfig&) { return v; };
}

const std::vector<KeySpec>& registry() {
  auto by_task = [](std::string cls, std::string pose) {
    return [cls = std::move(cls), pose = std::move(pose)](
               const ExperimentConfig& c) {
      return c.task == Task::classification ? cls : pose;
    };
  };
  static const std::vector<KeySpec> reg = {
      {"task",
       [](ExperimentConfig& c, const std::string& r) {
         c.task = to_task("task", r);
       },
       [](const ExperimentConfig& c) {
         return c.task == Task::classification ? std::string("classification")
                                               : std::string("pose");
       },
       fixed("classification")},
      {"method",
       [](ExperimentConfig& c, const std::string& r) {
         c.method = to_method("method", r);
       },
       [](const ExperimentConfig& c) { return method_name(c.method); },
       fixed("supervised")},
      {"seed",
       [](ExperimentConfig& c, const std::string& r) {
         c.seed = to_u64("seed", r);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.seed); },
       fixed("1388")},
      {"multi_seeds",
       [](ExperimentConfig& c, const std::string& r) {
         c.multi_seeds = to_list<uint64_t>("multi_seeds", r, to_u64);
       },
       [](const ExperimentConfig& c) {
         return fmt_list(c.multi_seeds,
                         [](uint64_t v) { return std::to_string(v); });
       },
       fixed("1388,1389,1390")},
      {"epochs",
       [](ExperimentConfig& c, const std::string& r) {
         c.epochs = to_int("epochs", r);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.epochs); },
       fixed("30")},
      {"steps_per_epoch",
       [](ExperimentConfig& c, const std::string& r) {
         c.steps_per_epoch = to_int("steps_per_epoch", r);
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.steps_per_epoch);
       },
       fixed("50")},
      {"dataset.image_size",
       [](ExperimentConfig& c, const std::string& r) {
         c.dataset.image_size = to_int("dataset.image_size", r);
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.dataset.image_size);
       },
       fixed("16")},
      {"dataset.classes",
       [](ExperimentConfig& c, const std::string& r) {
         c.dataset.classes = to_int("dataset.classes", r);
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.dataset.classes);
       },
       fixed("4")},
      {"dataset.keypoints",
       [](ExperimentConfig& c, const std::string& r) {
         c.dataset.keypoints = to_int("dataset.keypoints", r);
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.dataset.keypoints);
       },
       fixed("5")},
      {"dataset.size",
       [](ExperimentConfig& c, const std::string& r) {
         c.dataset.size = to_int("dataset.size", r);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.dataset.size); },
       fixed("200")},
      {"dataset.labeled",
       [](ExperimentConfig& c, const std::string& r) {
         c.dataset.labeled = to_int("dataset.labeled", r);
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.dataset.labeled);
       },
       fixed("30")},
      {"dataset.eval_size",
       [](ExperimentConfig& c, const std::string& r) {
         c.dataset.eval_size = to_int("dataset.eval_size", r);
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.dataset.eval_size);
       },
       fixed("128")},
      {"dataset.seed",
       [](ExperimentConfig& c, const std::string& r) {
         c.dataset.seed = to_u64("dataset.seed", r);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.dataset.seed); },
       fixed("1388")},
      {"batch.labeled",
       [](ExperimentConfig& c, const std::string& r) {
         c.batch.labeled = to_int("batch.labeled", r);
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.batch.labeled);
       },
       fixed("8")},
      {"batch.unlabeled_ratio",
       [](ExperimentConfig& c, const std::string& r) {
         c.batch.unlabeled_ratio = to_int("batch.unlabeled_ratio", r);
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.batch.unlabeled_ratio);
       },
       by_task("7", "1")},
      {"model.widths",
       [](ExperimentConfig& c, const std::string& r) {
         c.model.widths = to_list<int>("model.widths", r, to_int);
       },
       [](const ExperimentConfig& c) {
         return fmt_list(c.model.widths,
                         [](int v) { return std::to_string(v); });
       },
       fixed("6,12")},
      {"model.heatmap_sigma",
       [](ExperimentConfig& c, const std::string& r) {
         c.model.heatmap_sigma = to_double("model.heatmap_sigma", r);
       },
       [](const ExperimentConfig& c) {
         return fmt_double(c.model.heatmap_sigma);
       },
       fixed("1")},
      {"optim.kind",
       [](ExperimentConfig& c, const std::string& r) {
         if (r != "adam" && r != "nesterov")
           bad_value("optim.kind", r, "'adam' or 'nesterov'");
         c.optim.kind = r;
       },
       [](const ExperimentConfig& c) { return c.optim.kind; },
       by_task("nesterov", "adam")},
      {"optim.lr",
       [](ExperimentConfig& c, const std::string& r) {
         c.optim.lr = to_double("optim.lr", r);
       },
       [](const ExperimentConfig& c) { return fmt_double(c.optim.lr); },
       by_task("0.03", "0.00025")},
      {"optim.momentum",
       [](ExperimentConfig& c, const std::string& r) {
         c.optim.momentum = to_double("optim.momentum", r);
       },
       [](const ExperimentConfig& c) { return fmt_double(c.optim.momentum); },
       fixed("0.9")},
      {"ssl.tau",
       [](ExperimentConfig& c, const std::string& r) {
         c.ssl.tau = to_double("ssl.tau", r);
       },
       [](const ExperimentConfig& c) { return fmt_double(c.ssl.tau); },
       fixed("0.95")},
      {"ssl.ema_decay",
       [](ExperimentConfig& c, const std::string& r) {
         c.ssl.ema_decay = to_double("ssl.ema_decay", r);
       },
       [](const ExperimentConfig& c) { return fmt_double(c.ssl.ema_decay); },
       fixed("0.999")},
      {"ssl.mt_require_tau",
       [](ExperimentConfig& c, const std::string& r) {
         c.ssl.mt_require_tau = to_bool("ssl.mt_require_tau", r);
       },
       [](const ExperimentConfig& c) {
         return c.ssl.mt_require_tau ? std::string("true")
                                     : std::string("false");
       },
       fixed("true")},
      {"ubpl.enabled",
       [](ExperimentConfig& c, const std::string& r) {
         c.ubpl.enabled = to_bool("ubpl.enabled", r);
       },
       [](const ExperimentConfig& c) {
         return c.ubpl.enabled ? std::string("true") : std::string("false");
       },
       fixed("false")},
      {"ubpl.fd_enabled",
       [](ExperimentConfig& c, const std::string& r) {
         c.ubpl.fd_enabled = to_bool("ubpl.fd_enabled", r);
       },
       [](const ExperimentConfig& c) {
         return c.ubpl.fd_enabled ? std::string("true") : std::string("false");
       },
       fixed("true")},
      {"ubpl.lambda_ssl",
       [](ExperimentConfig& c, const std::string& r) {
         c.ubpl.lambda_ssl = to_double("ubpl.lambda_ssl", r);
       },
       [](const ExperimentConfig& c) { return fmt_double(c.ubpl.lambda_ssl); },
       fixed("10")},
      {"ubpl.lambda_pse",
       [](ExperimentConfig& c, const std::string& r) {
         c.ubpl.lambda_pse = to_double("ubpl.lambda_pse", r);
       },
       [](const ExperimentConfig& c) { return fmt_double(c.ubpl.lambda_pse); },
       fixed("10")},
      {"ubpl.lambda_fd",
       [](ExperimentConfig& c, const std::string& r) {
         c.ubpl.lambda_fd = to_double("ubpl.lambda_fd", r);
       },
       [](const ExperimentConfig& c) { return fmt_double(c.ubpl.lambda_fd); },
       fixed("1")},
      {"ubpl.beta_fd",
       [](ExperimentConfig& c, const std::string& r) {
         c.ubpl.beta_fd = to_double("ubpl.beta_fd", r);
       },
       [](const ExperimentConfig& c) { return fmt_double(c.ubpl.beta_fd); },
       by_task("1000", "1")},
      {"ubpl.seed_a",
       [](ExperimentConfig& c, const std::string& r) {
         c.ubpl.seed_a = to_u64("ubpl.seed_a", r);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.ubpl.seed_a); },
       fixed("1")},
      {"ubpl.seed_b",
       [](ExperimentConfig& c, const std::string& r) {
         c.ubpl.seed_b = to_u64("ubpl.seed_b", r);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.ubpl.seed_b); },
       fixed("2")},
  };
  return reg;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& ks : registry())
    if (ks.key == key) return &ks;
  return nullptr;
}

bool valid_key_chars(const std::string& key) {
  if (key.empty()) return false;
  for (char ch : key)
    if (!std::islower(static_cast<unsigned char>(ch)) &&
        !std::isdigit(static_cast<unsigned char>(ch)) && ch != '_' &&
        ch != '.')
      return false;
  return true;
}

void add_assignment(std::map<std::string, std::string>& out,
                    const std::string& stmt, const std::string& where,
                    bool allow_replace) {
  size_t eq = stmt.find('=');
  if (eq == std::string::npos)
    throw ConfigError(where + " is not a 'key = value' assignment: '" + stmt +
                      "'");
  std::string key = trim(stmt.substr(0, eq));
  std::string value = trim(stmt.substr(eq + 1));
  if (!valid_key_chars(key))
    throw ConfigError(where + ": bad config key '" + key + "'");
  if (value.empty())
    throw ConfigError(where + ": key '" + key + "' has an empty value");
  if (!allow_replace && out.count(key))
    throw ConfigError(where + ": duplicate config key '" + key + "'");
  out[key] = value;
}

ExperimentConfig build(const std::map<std::string, std::string>& explicit_kv) {
  for (const auto& [key, value] : explicit_kv)
    if (!find_key(key)) throw ConfigError("unknown config key '" + key + "'");
  ExperimentConfig cfg;
  // `task` first: several defaults follow it.
  if (auto it = explicit_kv.find("task"); it != explicit_kv.end())
    find_key("task")->set(cfg, it->second);
  for (const auto& ks : registry()) {
    auto it = explicit_kv.find(ks.key);
    ks.set(cfg, it != explicit_kv.end() ? it->second : ks.def(cfg));
  }
  validate_config(cfg);
  return cfg;
}

[[noreturn]] void invalid(const std::string& what) {
  throw ConfigError("invalid config: " + what);
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::supervised: return "supervised";
    case Method::mean_teacher: return "mean_teacher";
    case Method::fixmatch: return "fixmatch";
    case Method::dualpose: return "dualpose";
  }
  return "unknown";
}

std::string task_name(Task t) {
  return t == Task::classification ? "classification" : "pose";
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (size_t hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    add_assignment(kv, line, "config line " + std::to_string(lineno), false);
  }
  for (const auto& ov : overrides) add_assignment(kv, ov, "override", true);
  return build(kv);
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), overrides);
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& ks : registry())
    out += ks.key + " = " + ks.get(cfg) + "\n";
  return out;
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.epochs < 1) invalid("epochs must be at least 1");
  if (cfg.steps_per_epoch < 1) invalid("steps_per_epoch must be at least 1");
  if (cfg.multi_seeds.empty()) invalid("multi_seeds must not be empty");
  auto seeds = cfg.multi_seeds;
  std::sort(seeds.begin(), seeds.end());
  if (std::adjacent_find(seeds.begin(), seeds.end()) != seeds.end())
    invalid("multi_seeds must be distinct");

  const auto& d = cfg.dataset;
  if (d.image_size < 8) invalid("dataset.image_size must be at least 8");
  if (cfg.task == Task::regression && d.image_size < 12)
    invalid("dataset.image_size must be at least 12 for pose");
  if (d.classes < 2) invalid("dataset.classes must be at least 2");
  if (d.keypoints < 1) invalid("dataset.keypoints must be at least 1");
  if (d.size < 1) invalid("dataset.size must be at least 1");
  if (d.labeled < 1 || d.labeled > d.size)
    invalid("dataset.labeled must satisfy 0 < labeled <= dataset.size (got " +
            std::to_string(d.labeled) + "/" + std::to_string(d.size) + ")");
  if (d.eval_size < 1) invalid("dataset.eval_size must be at least 1");

  if (cfg.batch.labeled < 1) invalid("batch.labeled must be at least 1");
  if (cfg.batch.unlabeled_ratio < 0)
    invalid("batch.unlabeled_ratio must be non-negative");

  if (cfg.model.widths.empty()) invalid("model.widths must not be empty");
  for (int w : cfg.model.widths)
    if (w < 1) invalid("model.widths entries must be positive");
  if (!(cfg.model.heatmap_sigma > 0))
    invalid("model.heatmap_sigma must be positive");

  if (!(cfg.optim.lr > 0)) invalid("optim.lr must be positive");
  if (cfg.optim.momentum < 0 || cfg.optim.momentum >= 1)
    invalid("optim.momentum must lie in [0,1)");

  if (cfg.ssl.tau < 0 || cfg.ssl.tau > 1) invalid("ssl.tau must lie in [0,1]");
  if (cfg.ssl.ema_decay < 0 || cfg.ssl.ema_decay > 1)
    invalid("ssl.ema_decay must lie in [0,1]");

  const auto& u = cfg.ubpl;
  if (u.lambda_ssl < 0 || u.lambda_pse < 0 || u.lambda_fd < 0)
    invalid("ubpl lambda weights must be non-negative");
  if (u.beta_fd < 0) invalid("ubpl.beta_fd must be non-negative");
  if (u.seed_a == u.seed_b)
    invalid("ubpl.seed_a and ubpl.seed_b must differ (the two branches must "
            "initialize differently)");

  if (cfg.method == Method::fixmatch && cfg.task != Task::classification)
    invalid("method fixmatch requires task = classification");
  if (cfg.method == Method::dualpose && cfg.task != Task::regression)
    invalid("method dualpose requires task = pose");
}

ModelSpec ExperimentConfig::model_spec(uint64_t init_seed) const {
  ModelSpec s;
  s.task = task;
  s.in_channels = 1;
  s.height = dataset.image_size;
  s.width = dataset.image_size;
  s.num_outputs =
      task == Task::classification ? dataset.classes : dataset.keypoints;
  s.widths = model.widths;
  s.seed = init_seed;
  return s;
}

OptimSpec ExperimentConfig::optim_spec() const {
  OptimSpec s;
  s.kind =
      optim.kind == "adam" ? OptimSpec::Kind::adam : OptimSpec::Kind::nesterov_sgd;
  s.lr = optim.lr;
  s.momentum = optim.momentum;
  return s;
}

SslHyper ExperimentConfig::ssl_hyper() const {
  return SslHyper{ssl.tau, ssl.ema_decay, ssl.mt_require_tau};
}

EnsembleHyper ExperimentConfig::ensemble_hyper() const {
  EnsembleHyper h;
  h.lambda_ssl = ubpl.lambda_ssl;
  h.lambda_pse = ubpl.lambda_pse;
  h.lambda_fd = ubpl.fd_enabled ? ubpl.lambda_fd : 0.0;
  h.beta_fd = ubpl.beta_fd;
  h.ssl = ssl_hyper();
  return h;
}

SplitSpec ExperimentConfig::split_spec() const {
  return SplitSpec{dataset.labeled, dataset.size, dataset.seed};
}

TaskMeta ExperimentConfig::task_meta(std::vector<int> flip_map) const {
  return TaskMeta{task, std::move(flip_map), model.heatmap_sigma};
}

}  // namespace ubpl
