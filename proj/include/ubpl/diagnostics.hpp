#pragma once

#include <vector>

#include "ubpl/nn.hpp"

namespace ubpl {

// How the sample variance of an ensemble-mean predictor splits into the
// member variances and the pairwise covariances. rows is T predictor series
// over the same N samples; all moments are population moments (divide by N).
struct VarianceDecomposition {
  int t = 0;
  int n = 0;
  double mean_variance = 0.0;    // Var over samples of the row-wise mean
  double sum_variance = 0.0;     // sum_t Var(row_t)
  double sum_covariance = 0.0;   // sum over ordered pairs t != j of Cov
  double variance_term = 0.0;    // sum_variance / T^2
  double covariance_term = 0.0;  // sum_covariance / T^2
  std::vector<double> row_variances;    // per predictor
  std::vector<double> pair_covariances; // per unordered pair, (0,1),(0,2),..
};

// Satisfies mean_variance == variance_term + covariance_term up to
// floating-point error.
VarianceDecomposition variance_decomposition(
    const std::vector<std::vector<double>>& rows);

// Upper bound on P(|X - mean| >= epsilon) from the variance alone.
struct ChebyshevBound {
  double raw = 0.0;      // variance / epsilon^2
  double clamped = 0.0;  // min(1, raw): probabilities cannot exceed 1
};

ChebyshevBound chebyshev_bound(double variance, double epsilon);

// Equal-width confidence bins over [0, 1]. Empty bins keep count == 0 and
// are never interpolated.
struct CalibrationBin {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  double mean_confidence = 0.0;  // meaningful only when count > 0
  double mean_outcome = 0.0;     // ditto
};

std::vector<CalibrationBin> calibration_curve(
    const std::vector<double>& confidence, const std::vector<double>& outcome,
    int bins);

// Percentage of mismatched labels: 3 wrong out of 8 -> 37.5.
double error_rate(const std::vector<int>& predicted,
                  const std::vector<int>& actual);

// Fraction of visible keypoints whose prediction lies within
// alpha * normalization pixels of the truth.
double pck(const std::vector<DecodedPoint>& predicted,
           const std::vector<Keypoint>& truth, double alpha,
           double normalization);

// Mean squared pixel distance over visible keypoints.
double keypoint_mse(const std::vector<DecodedPoint>& predicted,
                    const std::vector<Keypoint>& truth);

}  // namespace ubpl
