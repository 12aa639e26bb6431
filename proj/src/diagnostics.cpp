#include "ubpl/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ubpl/tensor.hpp"

namespace ubpl {
namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

double cov_of(const std::vector<double>& u, double mu,
              const std::vector<double>& v, double mv) {
  double s = 0.0;
  for (size_t i = 0; i < u.size(); ++i) s += (u[i] - mu) * (v[i] - mv);
  return s / u.size();
}

}  // namespace

VarianceDecomposition variance_decomposition(
    const std::vector<std::vector<double>>& rows) {
  if (rows.empty())
    throw ShapeError("variance decomposition: needs at least one row");
  const size_t n = rows[0].size();
  if (n == 0)
    throw ShapeError("variance decomposition: rows must not be empty");
  for (const auto& r : rows)
    if (r.size() != n)
      throw ShapeError("variance decomposition: rows have unequal length");

  const int t = static_cast<int>(rows.size());
  VarianceDecomposition out;
  out.t = t;
  out.n = static_cast<int>(n);

  std::vector<double> mean_row(n, 0.0);
  for (const auto& r : rows)
    for (size_t i = 0; i < n; ++i) mean_row[i] += r[i];
  for (double& x : mean_row) x /= t;
  const double mm = mean_of(mean_row);
  out.mean_variance = cov_of(mean_row, mm, mean_row, mm);

  std::vector<double> mu(t);
  for (int a = 0; a < t; ++a) mu[a] = mean_of(rows[a]);
  for (int a = 0; a < t; ++a) {
    out.row_variances.push_back(cov_of(rows[a], mu[a], rows[a], mu[a]));
    out.sum_variance += out.row_variances.back();
  }
  // Each unordered pair appears once here and is counted for both orders.
  for (int a = 0; a < t; ++a)
    for (int b = a + 1; b < t; ++b) {
      out.pair_covariances.push_back(cov_of(rows[a], mu[a], rows[b], mu[b]));
      out.sum_covariance += 2.0 * out.pair_covariances.back();
    }

  const double tt = static_cast<double>(t) * static_cast<double>(t);
  out.variance_term = out.sum_variance / tt;
  out.covariance_term = out.sum_covariance / tt;
  return out;
}

ChebyshevBound chebyshev_bound(double variance, double epsilon) {
  if (variance < 0.0)
    throw NumericError("variance must be non-negative");
  if (!(epsilon > 0.0))
    throw NumericError("deviation threshold must be positive");
  ChebyshevBound b;
  b.raw = variance / (epsilon * epsilon);
  b.clamped = std::min(1.0, b.raw);
  return b;
}

std::vector<CalibrationBin> calibration_curve(
    const std::vector<double>& confidence, const std::vector<double>& outcome,
    int bins) {
  if (bins < 1) throw ShapeError("calibration curve: needs at least one bin");
  if (confidence.size() != outcome.size())
    throw ShapeError("calibration curve: confidence and outcome lengths "
                     "differ");
  std::vector<CalibrationBin> out(bins);
  for (int b = 0; b < bins; ++b) {
    out[b].lo = static_cast<double>(b) / bins;
    out[b].hi = static_cast<double>(b + 1) / bins;
  }
  for (size_t i = 0; i < confidence.size(); ++i) {
    const double c = confidence[i];
    if (!(c >= 0.0 && c <= 1.0))
      throw NumericError("calibration curve: confidence " +
                         std::to_string(c) + " outside [0, 1]");
    const int b = std::min(bins - 1, static_cast<int>(c * bins));
    out[b].count += 1;
    out[b].mean_confidence += c;
    out[b].mean_outcome += outcome[i];
  }
  for (auto& bin : out) {
    if (bin.count == 0) continue;
    bin.mean_confidence /= bin.count;
    bin.mean_outcome /= bin.count;
  }
  return out;
}

double error_rate(const std::vector<int>& predicted,
                  const std::vector<int>& actual) {
  if (predicted.size() != actual.size())
    throw ShapeError("error rate: prediction and label counts differ");
  if (predicted.empty()) throw ShapeError("error rate: no samples");
  int wrong = 0;
  for (size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] != actual[i]) ++wrong;
  return 100.0 * wrong / static_cast<double>(predicted.size());
}

double pck(const std::vector<DecodedPoint>& predicted,
           const std::vector<Keypoint>& truth, double alpha,
           double normalization) {
  if (predicted.size() != truth.size())
    throw ShapeError("keypoint accuracy: prediction and truth counts differ");
  if (alpha < 0.0) throw NumericError("keypoint accuracy: alpha < 0");
  if (!(normalization > 0.0))
    throw NumericError("keypoint accuracy: normalization must be positive");
  int visible = 0, hits = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (!truth[i].visible) continue;
    ++visible;
    const double dx = predicted[i].x - truth[i].x;
    const double dy = predicted[i].y - truth[i].y;
    if (std::sqrt(dx * dx + dy * dy) <= alpha * normalization) ++hits;
  }
  if (visible == 0)
    throw ShapeError("keypoint accuracy: no visible keypoints");
  return static_cast<double>(hits) / visible;
}

double keypoint_mse(const std::vector<DecodedPoint>& predicted,
                    const std::vector<Keypoint>& truth) {
  if (predicted.size() != truth.size())
    throw ShapeError("keypoint error: prediction and truth counts differ");
  int visible = 0;
  double sum = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (!truth[i].visible) continue;
    ++visible;
    const double dx = predicted[i].x - truth[i].x;
    const double dy = predicted[i].y - truth[i].y;
    sum += dx * dx + dy * dy;
  }
  if (visible == 0) throw ShapeError("keypoint error: no visible keypoints");
  return sum / visible;
}

}  // namespace ubpl
