#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ubpl/tensor.hpp"

namespace ubpl {

enum class Task { classification, regression };

struct ModelSpec {
  Task task = Task::classification;
  int in_channels = 1;
  int height = 16;
  int width = 16;
  // num_classes for classification, keypoint count for regression.
  int num_outputs = 4;
  // Channel width of each conv stage. The classifier halves the spatial
  // extent after every stage; the regressor keeps full resolution.
  std::vector<int> widths = {8, 16, 32};
  uint64_t seed = 1;
};

// Feature map taken at the average-pool layer, the input to the
// cross-branch decorrelation loss.
struct FeatureTap {
  Tensor feature;  // [C, h, w]
  // View as [C, h*w], one row of positions per channel.
  Tensor flat() const {
    return reshape(feature, {feature.shape()[0],
                             feature.shape()[1] * feature.shape()[2]});
  }
};

struct ModelForward {
  Tensor output;  // logits [K] or heatmaps [K, H, W]
  FeatureTap tap;
};

// A small convolutional net: either a classifier (stages of
// conv3x3/relu/avgpool2 ending in an average-pooled feature block and a
// linear head) or a heatmap regressor (full-resolution conv stack with a
// conv head; the feature tap is a window-4 average pool of the last stage).
class Model {
 public:
  explicit Model(const ModelSpec& spec);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelSpec& spec() const { return spec_; }
  ModelForward forward(const Tensor& image) const;

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::string>& param_names() const { return names_; }
  int param_count() const;

  // Deep copy with independent parameter storage (EMA teachers, ensembles).
  Model clone() const;

  std::vector<double> flat_params() const;
  void set_flat_params(const std::vector<double>& v);
  void zero_grad();

 private:
  ModelSpec spec_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  int tap_h_ = 0, tap_w_ = 0;
};

struct Keypoint {
  double x = 0.0;  // column
  double y = 0.0;  // row
  bool visible = true;
};

struct DecodedPoint {
  int x = 0;
  int y = 0;
  double confidence = 0.0;
};

// Per channel: location of the maximum (first in row-major order on ties)
// and that maximum clamped to [0,1] as the confidence.
std::vector<DecodedPoint> decode_heatmap(const Tensor& heatmap);

// Unnormalized Gaussian exp(-d^2 / (2 sigma^2)) per keypoint channel, peak
// value 1 at the keypoint; invisible keypoints render an all-zero channel.
Tensor render_heatmap(const std::vector<Keypoint>& keypoints, double sigma,
                      int height, int width);

}  // namespace ubpl
