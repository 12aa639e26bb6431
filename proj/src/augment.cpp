#include "ubpl/augment.hpp"

#include <algorithm>
#include <cmath>

namespace ubpl {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Bilinear warp: every output pixel samples the input through out_to_in;
// samples landing outside the input read 0.
std::vector<double> warp_values(const std::vector<double>& src, int channels,
                                int h, int w, const Affine& out_to_in) {
  std::vector<double> dst(src.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto [sx, sy] = apply_point(out_to_in, x, y);
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      auto tap = [&](int c, int yy, int xx) -> double {
        if (xx < 0 || xx >= w || yy < 0 || yy >= h) return 0.0;
        return src[(static_cast<size_t>(c) * h + yy) * w + xx];
      };
      for (int c = 0; c < channels; ++c) {
        const double v = (1 - fy) * ((1 - fx) * tap(c, y0, x0) +
                                     fx * tap(c, y0, x0 + 1)) +
                         fy * ((1 - fx) * tap(c, y0 + 1, x0) +
                               fx * tap(c, y0 + 1, x0 + 1));
        dst[(static_cast<size_t>(c) * h + y) * w + x] = v;
      }
    }
  }
  return dst;
}

void check_flip_map(const std::vector<int>& flip_map, int k) {
  if (flip_map.empty()) return;
  if (static_cast<int>(flip_map.size()) != k) {
    throw ShapeError("flip map length does not match channel count");
  }
  for (int j = 0; j < k; ++j) {
    if (flip_map[j] < 0 || flip_map[j] >= k || flip_map[flip_map[j]] != j) {
      throw ShapeError("flip map is not an involution permutation");
    }
  }
}

}  // namespace

Affine geometry(const TransformRecord& r, int height, int width) {
  if (r.scale <= 0.0) throw NumericError("transform has non-positive scale");
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  const double th = r.rotation_deg * kPi / 180.0;
  const double co = std::cos(th), si = std::sin(th);
  // M = R(theta) * scale * F(flip)
  const double f = r.hflip ? -1.0 : 1.0;
  Affine m;
  m.a = co * r.scale * f;
  m.b = -si * r.scale;
  m.c = si * r.scale * f;
  m.d = co * r.scale;
  m.tx = cx - (m.a * cx + m.b * cy) + r.shift_x;
  m.ty = cy - (m.c * cx + m.d * cy) + r.shift_y;
  return m;
}

Affine invert(const Affine& m) {
  const double det = m.a * m.d - m.b * m.c;
  if (std::abs(det) < 1e-12) throw NumericError("degenerate transform");
  Affine inv;
  inv.a = m.d / det;
  inv.b = -m.b / det;
  inv.c = -m.c / det;
  inv.d = m.a / det;
  inv.tx = -(inv.a * m.tx + inv.b * m.ty);
  inv.ty = -(inv.c * m.tx + inv.d * m.ty);
  return inv;
}

Affine compose(const Affine& o, const Affine& i) {
  Affine m;
  m.a = o.a * i.a + o.b * i.c;
  m.b = o.a * i.b + o.b * i.d;
  m.c = o.c * i.a + o.d * i.c;
  m.d = o.c * i.b + o.d * i.d;
  m.tx = o.a * i.tx + o.b * i.ty + o.tx;
  m.ty = o.c * i.tx + o.d * i.ty + o.ty;
  return m;
}

std::pair<double, double> apply_point(const Affine& m, double x, double y) {
  return {m.a * x + m.b * y + m.tx, m.c * x + m.d * y + m.ty};
}

AugmentPolicy weak_policy(Task task, int image_size) {
  AugmentPolicy p;
  p.allow_hflip = true;
  if (task == Task::regression) {
    p.max_rotation_deg = 5.0;
    p.scale_lo = 0.95;
    p.scale_hi = 1.05;
  } else {
    p.max_shift = image_size / 8;
  }
  return p;
}

AugmentPolicy strong_policy(Task task, int image_size) {
  AugmentPolicy p;
  p.allow_hflip = true;
  if (task == Task::regression) {
    p.max_rotation_deg = 30.0;
    p.scale_lo = 0.75;
    p.scale_hi = 1.25;
  } else {
    p.max_shift = image_size / 4;
    p.noise_std = 0.1;
    p.cutout_size = image_size / 4;
  }
  return p;
}

TransformRecord sample_record(const AugmentPolicy& policy, int image_size,
                              Rng& rng) {
  TransformRecord r;
  if (policy.max_rotation_deg > 0.0) {
    r.rotation_deg =
        rng.uniform(-policy.max_rotation_deg, policy.max_rotation_deg);
  }
  if (policy.scale_hi > policy.scale_lo) {
    r.scale = rng.uniform(policy.scale_lo, policy.scale_hi);
  } else {
    r.scale = policy.scale_lo;
  }
  if (policy.allow_hflip) r.hflip = rng.bernoulli(0.5);
  if (policy.max_shift > 0) {
    r.shift_x = rng.uniform_int(-policy.max_shift, policy.max_shift);
    r.shift_y = rng.uniform_int(-policy.max_shift, policy.max_shift);
  }
  r.noise_std = policy.noise_std;
  if (policy.cutout_size > 0) {
    r.cutout.size = policy.cutout_size;
    r.cutout.fill = policy.cutout_fill;
    r.cutout.x0 = rng.uniform_int(0, image_size - policy.cutout_size);
    r.cutout.y0 = rng.uniform_int(0, image_size - policy.cutout_size);
  }
  return r;
}

AugmentResult apply_record(const Tensor& image,
                           const std::vector<Keypoint>& keypoints,
                           const TransformRecord& record,
                           const std::vector<int>& flip_map, Rng& rng) {
  if (image.shape().size() != 3) {
    throw ShapeError("augment: image must be [C,H,W]");
  }
  const int c = image.shape()[0];
  const int h = image.shape()[1];
  const int w = image.shape()[2];
  const Affine fwd = geometry(record, h, w);
  auto vals = warp_values(image.values(), c, h, w, invert(fwd));

  if (record.noise_std > 0.0) {
    for (auto& v : vals) {
      v = std::min(1.0, std::max(0.0, v + rng.gaussian() * record.noise_std));
    }
  }
  if (record.cutout.size > 0) {
    for (int ch = 0; ch < c; ++ch) {
      for (int y = record.cutout.y0;
           y < std::min(h, record.cutout.y0 + record.cutout.size); ++y) {
        for (int x = record.cutout.x0;
             x < std::min(w, record.cutout.x0 + record.cutout.size); ++x) {
          vals[(static_cast<size_t>(ch) * h + y) * w + x] =
              record.cutout.fill;
        }
      }
    }
  }

  check_flip_map(flip_map, static_cast<int>(keypoints.size()));
  std::vector<Keypoint> moved(keypoints.size());
  for (size_t k = 0; k < keypoints.size(); ++k) {
    const auto [x, y] = apply_point(fwd, keypoints[k].x, keypoints[k].y);
    moved[k].x = x;
    moved[k].y = y;
    moved[k].visible = keypoints[k].visible && x >= 0.0 && y >= 0.0 &&
                       x <= w - 1.0 && y <= h - 1.0;
  }
  if (record.hflip && !flip_map.empty()) {
    std::vector<Keypoint> swapped(moved.size());
    for (size_t j = 0; j < moved.size(); ++j) swapped[j] = moved[flip_map[j]];
    moved = std::move(swapped);
  }
  return {Tensor::leaf(image.shape(), std::move(vals)), std::move(moved),
          record};
}

AugmentResult weak_augment(const Tensor& image,
                           const std::vector<Keypoint>& keypoints, Task task,
                           const std::vector<int>& flip_map, Rng& rng) {
  const int side = std::max(image.shape()[1], image.shape()[2]);
  const TransformRecord r = sample_record(weak_policy(task, side), side, rng);
  return apply_record(image, keypoints, r, flip_map, rng);
}

AugmentResult strong_augment(const Tensor& image,
                             const std::vector<Keypoint>& keypoints,
                             Task task, const std::vector<int>& flip_map,
                             Rng& rng) {
  const int side = std::max(image.shape()[1], image.shape()[2]);
  const TransformRecord r =
      sample_record(strong_policy(task, side), side, rng);
  return apply_record(image, keypoints, r, flip_map, rng);
}

Tensor align_prediction(const Tensor& pred, const TransformRecord& from,
                        const TransformRecord& to,
                        const std::vector<int>& flip_map) {
  if (pred.shape().size() != 3) {
    throw ShapeError("align_prediction: prediction must be [K,H,W]");
  }
  const int k = pred.shape()[0];
  const int h = pred.shape()[1];
  const int w = pred.shape()[2];
  // Output pixel in `to`'s frame -> original frame -> `from`'s frame.
  const Affine out_to_in =
      compose(geometry(from, h, w), invert(geometry(to, h, w)));

  std::vector<double> source = pred.values();
  if (from.hflip != to.hflip && !flip_map.empty()) {
    check_flip_map(flip_map, k);
    std::vector<double> permuted(source.size());
    for (int j = 0; j < k; ++j) {
      std::copy(source.begin() + static_cast<size_t>(flip_map[j]) * h * w,
                source.begin() + static_cast<size_t>(flip_map[j] + 1) * h * w,
                permuted.begin() + static_cast<size_t>(j) * h * w);
    }
    source = std::move(permuted);
  }
  return Tensor::leaf(pred.shape(), warp_values(source, k, h, w, out_to_in));
}

}  // namespace ubpl
