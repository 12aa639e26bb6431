#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ubpl/nn.hpp"
#include "ubpl/tensor.hpp"

namespace ubpl {

struct LabeledSample {
  Tensor image;  // [C,H,W], values in [0,1]
  int class_label = -1;
  std::vector<Keypoint> keypoints;
};

struct Dataset {
  Task task = Task::classification;
  std::string name;
  uint64_t seed = 0;
  int image_size = 16;
  int num_classes = 0;
  int num_keypoints = 0;
  std::vector<int> flip_map;  // keypoint channel pairs under horizontal flip
  std::vector<LabeledSample> samples;

  int size() const { return static_cast<int>(samples.size()); }
};

struct SplitSpec {
  int n_labeled = 0;
  int n_total = 0;
  uint64_t seed = 0;
};

// The unlabeled partition. Training code can only reach images; the held-back
// labels stay private to the diagnostics accessor so no training path can
// touch them by construction.
class UnlabeledSet {
 public:
  UnlabeledSet() = default;
  UnlabeledSet(Task task, std::vector<LabeledSample> hidden)
      : task_(task), hidden_(std::move(hidden)) {}

  Task task() const { return task_; }
  int size() const { return static_cast<int>(hidden_.size()); }
  const Tensor& image(int i) const { return hidden_.at(i).image; }

  // Privileged: pseudo-label quality diagnostics only.
  const LabeledSample& diagnostics_ground_truth(int i) const {
    return hidden_.at(i);
  }

 private:
  Task task_ = Task::classification;
  std::vector<LabeledSample> hidden_;
};

// Class-conditional radial interference patterns: class k carries ring
// frequency 2+k with a fixed per-class phase, plus per-sample centre/phase
// jitter and pixel noise. Classes are balanced within one sample.
Dataset gen_classification(int n, int num_classes, int image_size,
                           uint64_t seed);

// A star-shaped articulated figure: a root blob plus K-1 limbs at jittered
// angles, joints marked by bright blobs. Keypoint 0 is the root; limb joints
// pair up left/right in the flip map.
Dataset gen_keypoints(int n, int num_keypoints, int image_size,
                      uint64_t seed);

// Deterministic disjoint split; classification splits are label-stratified
// (per-class labeled counts differ by at most one).
std::pair<Dataset, UnlabeledSet> split_labeled(const Dataset& dataset,
                                               const SplitSpec& spec);

// IDX (big-endian) image+label ingestion; pixel bytes scale to [0,1].
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

}  // namespace ubpl
