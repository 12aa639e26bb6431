#pragma once

#include <utility>
#include <vector>

#include "ubpl/nn.hpp"
#include "ubpl/rng.hpp"
#include "ubpl/tensor.hpp"

namespace ubpl {

struct CutoutBox {
  int x0 = 0;
  int y0 = 0;
  int size = 0;  // 0 = no cutout
  double fill = 0.5;
};

// One sampled augmentation. The geometric part (rotation/scale/flip/shift)
// is invertible; the photometric part records what was applied but plays no
// role in alignment.
struct TransformRecord {
  double rotation_deg = 0.0;
  double scale = 1.0;
  bool hflip = false;
  double shift_x = 0.0;
  double shift_y = 0.0;
  double noise_std = 0.0;
  CutoutBox cutout;
};

// p' = [a b; c d] p + (tx, ty), in (x, y) pixel coordinates.
struct Affine {
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0, tx = 0.0, ty = 0.0;
};

// Forward map of a record's geometry about the image centre
// ((w-1)/2, (h-1)/2): flip, then isotropic scale, then rotation, then shift.
Affine geometry(const TransformRecord& r, int height, int width);
Affine invert(const Affine& m);
Affine compose(const Affine& outer, const Affine& inner);  // outer ∘ inner
std::pair<double, double> apply_point(const Affine& m, double x, double y);

struct AugmentPolicy {
  double max_rotation_deg = 0.0;
  double scale_lo = 1.0;
  double scale_hi = 1.0;
  bool allow_hflip = false;
  int max_shift = 0;  // +/- whole pixels on both axes
  double noise_std = 0.0;
  int cutout_size = 0;
  double cutout_fill = 0.5;
};

// Weak: pose = rotation +/-5 deg, scale 0.95-1.05, flip; classification =
// flip plus random shift of up to 1/8 image side (the crop stand-in).
AugmentPolicy weak_policy(Task task, int image_size);
// Strong: pose = rotation +/-30 deg, scale 0.75-1.25, flip; classification =
// flip, shift up to 1/4 side, plus two photometric ops (additive noise and
// cutout) standing in for heavier policy search.
AugmentPolicy strong_policy(Task task, int image_size);

struct AugmentResult {
  Tensor image;
  std::vector<Keypoint> keypoints;
  TransformRecord record;
};

TransformRecord sample_record(const AugmentPolicy& policy, int image_size,
                              Rng& rng);

// Applies a given record: bilinear geometric warp (zero fill) of image and
// the identical point transform of keypoints; out-of-bounds keypoints are
// marked invisible; on flip, keypoint channels are permuted by flip_map.
// rng realizes the photometric part only.
AugmentResult apply_record(const Tensor& image,
                           const std::vector<Keypoint>& keypoints,
                           const TransformRecord& record,
                           const std::vector<int>& flip_map, Rng& rng);

AugmentResult weak_augment(const Tensor& image,
                           const std::vector<Keypoint>& keypoints, Task task,
                           const std::vector<int>& flip_map, Rng& rng);
AugmentResult strong_augment(const Tensor& image,
                             const std::vector<Keypoint>& keypoints, Task task,
                             const std::vector<int>& flip_map, Rng& rng);

// Resamples a prediction made under `from`'s geometry into `to`'s frame
// (inverse-then-forward composition, bilinear, zero fill). When exactly one
// record flips, channels are permuted by flip_map. The result is a constant:
// gradients never flow through alignment.
Tensor align_prediction(const Tensor& pred, const TransformRecord& from,
                        const TransformRecord& to,
                        const std::vector<int>& flip_map);

}  // namespace ubpl
