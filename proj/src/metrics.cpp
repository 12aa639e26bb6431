#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "ubpl/io.hpp"

namespace ubpl {
namespace {

constexpr const char* kHeader = "run_id,epoch,step,split,metric_name,value";

void check_field(const std::string& s, const char* what) {
  if (s.empty()) throw ShapeError(std::string(what) + " must not be empty");
  if (s.find_first_of(",\n\r\"") != std::string::npos)
    throw ShapeError(std::string(what) +
                     " must not contain commas, quotes or newlines");
}

}  // namespace

MetricsLogger::MetricsLogger(const std::string& path)
    : out_(path, std::ios::trunc) {
  if (!out_) throw NumericError("cannot open " + path + " for writing");
  out_ << kHeader << '\n';
}

void MetricsLogger::log(const std::string& run_id, int epoch, int step,
                        const std::string& split, const std::string& metric,
                        double value) {
  check_field(run_id, "run id");
  check_field(split, "split");
  check_field(metric, "metric name");
  if (!std::isfinite(value))
    throw NumericError("metric " + metric + " is not finite");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  out_ << run_id << ',' << epoch << ',' << step << ',' << split << ','
       << metric << ',' << buf << '\n';
  if (!out_) throw NumericError("failed to write metric row");
}

void MetricsLogger::flush() { out_.flush(); }

std::vector<MetricRow> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NumericError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kHeader)
    throw NumericError(path + " does not start with the metric header");
  std::vector<MetricRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 6)
      throw NumericError(path + ":" + std::to_string(lineno) +
                         ": expected 6 comma-separated fields");
    MetricRow row;
    row.run_id = fields[0];
    row.epoch = std::atoi(fields[1].c_str());
    row.step = std::atoi(fields[2].c_str());
    row.split = fields[3];
    row.metric = fields[4];
    char* end = nullptr;
    row.value = std::strtod(fields[5].c_str(), &end);
    if (end == fields[5].c_str())
      throw NumericError(path + ":" + std::to_string(lineno) +
                         ": bad metric value '" + fields[5] + "'");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ubpl
