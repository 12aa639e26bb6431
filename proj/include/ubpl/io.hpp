#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ubpl/ssl.hpp"

namespace ubpl {

// Checkpoints are flat lists of named double vectors in a fixed order,
// serialized little-endian with length prefixes. Saving the result of a
// load reproduces the input byte for byte.
struct CheckpointRecord {
  std::string name;
  std::vector<double> values;
};
using Checkpoint = std::vector<CheckpointRecord>;

void save_checkpoint(const std::string& path, const Checkpoint& records);
Checkpoint load_checkpoint(const std::string& path);

// Branch round trip: model parameters, the teacher copy when present,
// optimizer slots, and the step counters, all under the given name prefix.
Checkpoint branch_checkpoint(const BranchState& branch,
                             const std::string& prefix);
void restore_branch(BranchState& branch, const Checkpoint& records,
                    const std::string& prefix);

// Append-style metric log: one file per run, a fixed header, one row per
// scalar. Values survive a write/read round trip exactly.
struct MetricRow {
  std::string run_id;
  int epoch = 0;
  int step = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

class MetricsLogger {
 public:
  explicit MetricsLogger(const std::string& path);
  void log(const std::string& run_id, int epoch, int step,
           const std::string& split, const std::string& metric, double value);
  void flush();

 private:
  std::ofstream out_;
};

std::vector<MetricRow> read_metrics(const std::string& path);

}  // namespace ubpl
