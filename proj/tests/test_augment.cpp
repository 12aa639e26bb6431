#include <cmath>
#include <vector>

#include "doctest.h"
#include "ubpl/augment.hpp"
#include "ubpl/nn.hpp"
#include "ubpl/rng.hpp"

using namespace ubpl;

namespace {

Tensor random_image(uint64_t seed, int c, int h, int w) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(c) * h * w);
  for (auto& x : v) x = rng.uniform();
  return Tensor::leaf({c, h, w}, std::move(v));
}

}  // namespace

TEST_CASE("identity record leaves image and keypoints untouched") {
  Tensor img = random_image(3, 1, 16, 16);
  std::vector<Keypoint> kps = {{4.0, 9.0, true}, {12.0, 2.0, true}};
  Rng rng(1);
  auto res = apply_record(img, kps, TransformRecord{}, {1, 0}, rng);
  CHECK(res.image.values() == img.values());
  for (size_t k = 0; k < kps.size(); ++k) {
    CHECK(res.keypoints[k].x == kps[k].x);
    CHECK(res.keypoints[k].y == kps[k].y);
    CHECK(res.keypoints[k].visible);
  }
}

TEST_CASE("horizontal flip is an involution on coordinates") {
  TransformRecord flip;
  flip.hflip = true;
  const Affine m = geometry(flip, 16, 16);
  auto [x1, y1] = apply_point(m, 4.0, 9.0);
  CHECK(x1 == 11.0);
  CHECK(y1 == 9.0);
  auto [x2, y2] = apply_point(m, x1, y1);
  CHECK(x2 == 4.0);
  CHECK(y2 == 9.0);
}

TEST_CASE("rotation matches the direct rotation-matrix computation") {
  TransformRecord rot;
  rot.rotation_deg = 5.0;
  const Affine m = geometry(rot, 16, 16);
  auto [x, y] = apply_point(m, 4.0, 4.0);
  const double th = 5.0 * 3.14159265358979323846 / 180.0;
  const double dx = 4.0 - 7.5, dy = 4.0 - 7.5;
  CHECK(std::abs(x - (7.5 + std::cos(th) * dx - std::sin(th) * dy)) <= 1e-9);
  CHECK(std::abs(y - (7.5 + std::sin(th) * dx + std::cos(th) * dy)) <= 1e-9);
}

TEST_CASE("record geometry inverts to better than half a pixel") {
  Rng rng(5);
  for (int it = 0; it < 50; ++it) {
    TransformRecord r;
    r.rotation_deg = rng.uniform(-30.0, 30.0);
    r.scale = rng.uniform(0.75, 1.25);
    r.hflip = rng.bernoulli(0.5);
    r.shift_x = rng.uniform_int(-4, 4);
    r.shift_y = rng.uniform_int(-4, 4);
    const Affine fwd = geometry(r, 16, 16);
    const Affine inv = invert(fwd);
    const double px = rng.uniform(2.0, 13.0), py = rng.uniform(2.0, 13.0);
    auto [qx, qy] = apply_point(fwd, px, py);
    auto [bx, by] = apply_point(inv, qx, qy);
    CHECK(std::abs(bx - px) <= 0.5);
    CHECK(std::abs(by - py) <= 0.5);
    CHECK(std::abs(bx - px) <= 1e-9);  // in practice exact to fp noise
  }
  CHECK_THROWS_AS(geometry(TransformRecord{0.0, 0.0}, 16, 16), NumericError);
}

TEST_CASE("strong pose rotations stay in range with a flat histogram") {
  Rng rng(77);
  const AugmentPolicy pol = strong_policy(Task::regression, 16);
  std::vector<int> bins(6, 0);
  for (int i = 0; i < 10000; ++i) {
    const TransformRecord r = sample_record(pol, 16, rng);
    CHECK(r.rotation_deg >= -30.0);
    CHECK(r.rotation_deg <= 30.0);
    CHECK(r.scale >= 0.75);
    CHECK(r.scale <= 1.25);
    ++bins[std::min(5, static_cast<int>((r.rotation_deg + 30.0) / 10.0))];
  }
  for (int b : bins) {
    CHECK(b > 1400);
    CHECK(b < 1950);
  }
}

TEST_CASE("classification weak policy only flips and shifts whole pixels") {
  Tensor img = random_image(9, 1, 16, 16);
  Rng rng(13);
  for (int it = 0; it < 20; ++it) {
    auto res = weak_augment(img, {}, Task::classification, {}, rng);
    CHECK(res.record.rotation_deg == 0.0);
    CHECK(res.record.scale == 1.0);
    CHECK(std::abs(res.record.shift_x) <= 2.0);
    // Integer shift + flip is a pure pixel permutation with zero fill.
    for (double v : res.image.values()) {
      bool found = v == 0.0;
      for (double o : img.values()) found = found || v == o;
      CHECK(found);
    }
  }
}

TEST_CASE("zeroed photometric ops reduce strong to its geometric warp") {
  Tensor img = random_image(21, 1, 16, 16);
  AugmentPolicy pol = strong_policy(Task::classification, 16);
  pol.noise_std = 0.0;
  pol.cutout_size = 0;
  Rng rng(3);
  const TransformRecord r = sample_record(pol, 16, rng);
  Rng dummy(0);
  auto res = apply_record(img, {}, r, {}, dummy);
  // Re-apply the bare geometry by hand through the public pieces.
  Rng dummy2(0);
  TransformRecord bare;
  bare.hflip = r.hflip;
  bare.shift_x = r.shift_x;
  bare.shift_y = r.shift_y;
  auto ref = apply_record(img, {}, bare, {}, dummy2);
  CHECK(res.image.values() == ref.image.values());
}

TEST_CASE("cutout paints an exact constant block") {
  Tensor img = random_image(33, 2, 16, 16);
  TransformRecord r;
  r.cutout = {5, 7, 4, 0.5};
  Rng rng(1);
  auto res = apply_record(img, {}, r, {}, rng);
  double sum = 0.0;
  for (int c = 0; c < 2; ++c) {
    for (int y = 7; y < 11; ++y) {
      for (int x = 5; x < 9; ++x) {
        sum += res.image.values()[(c * 16 + y) * 16 + x];
      }
    }
  }
  CHECK(sum / 32.0 == 0.5);
  // Outside the box the image is untouched.
  CHECK(res.image.values()[0] == img.values()[0]);
}

TEST_CASE("noise keeps pixel values inside the unit interval") {
  Tensor img = random_image(41, 1, 16, 16);
  TransformRecord r;
  r.noise_std = 0.5;
  Rng rng(2);
  auto res = apply_record(img, {}, r, {}, rng);
  CHECK(res.image.values() != img.values());
  for (double v : res.image.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("out-of-bounds keypoints become invisible") {
  TransformRecord r;
  r.rotation_deg = 45.0;
  std::vector<Keypoint> kps = {{15.0, 0.0, true}, {8.0, 8.0, true}};
  Rng rng(1);
  auto res = apply_record(random_image(1, 1, 16, 16), kps, r, {1, 0}, rng);
  CHECK_FALSE(res.keypoints[0].visible);
  CHECK(res.keypoints[1].visible);
}

TEST_CASE("flip permutes keypoint channels by the pair map") {
  TransformRecord flip;
  flip.hflip = true;
  std::vector<Keypoint> kps = {{4.0, 9.0, true}, {12.0, 2.0, true},
                               {8.0, 8.0, true}};
  Rng rng(1);
  auto res =
      apply_record(random_image(1, 1, 16, 16), kps, flip, {1, 0, 2}, rng);
  // Flipped x of original keypoint 1 lands in slot 0 and vice versa.
  CHECK(res.keypoints[0].x == 15.0 - 12.0);
  CHECK(res.keypoints[0].y == 2.0);
  CHECK(res.keypoints[1].x == 15.0 - 4.0);
  CHECK(res.keypoints[2].x == 15.0 - 8.0);

  CHECK_THROWS_AS(
      apply_record(random_image(1, 1, 16, 16), kps, flip, {0, 0, 2}, rng),
      ShapeError);
}

TEST_CASE("aligning a prediction onto its own frame is lossless") {
  Tensor hm = render_heatmap({{5.0, 9.0, true}, {11.0, 4.0, true}}, 1.5, 16,
                             16);
  TransformRecord r;
  r.rotation_deg = 17.0;
  r.scale = 1.1;
  Tensor out = align_prediction(hm, r, r, {1, 0});
  for (int i = 0; i < hm.size(); ++i) {
    CHECK(std::abs(out.values()[i] - hm.values()[i]) <= 1e-6);
  }
  CHECK_FALSE(out.requires_grad());
}

TEST_CASE("flip-only alignment mirrors the map and swaps paired channels") {
  Tensor hm = render_heatmap({{5.0, 9.0, true}, {11.0, 4.0, true}}, 1.0, 16,
                             16);
  TransformRecord from;
  from.hflip = true;
  Tensor out = align_prediction(hm, from, TransformRecord{}, {1, 0});
  auto pts = decode_heatmap(out);
  // Channel 0 now carries mirrored channel 1 and vice versa.
  CHECK(pts[0].x == 15 - 11);
  CHECK(pts[0].y == 4);
  CHECK(pts[1].x == 15 - 5);
  CHECK(pts[1].y == 9);

  TransformRecord degenerate;
  degenerate.scale = 0.0;
  CHECK_THROWS_AS(align_prediction(hm, degenerate, TransformRecord{}, {1, 0}),
                  NumericError);
}

TEST_CASE("rotated predictions align back to within one pixel") {
  const std::vector<Keypoint> kps = {{8.0, 5.0, true}};
  TransformRecord from;
  from.rotation_deg = 10.0;
  Rng rng(1);
  // Prediction made in the rotated frame: heatmap of the rotated keypoint.
  auto moved = apply_record(render_heatmap(kps, 1.0, 16, 16), kps, from, {},
                            rng);
  Tensor pred = render_heatmap(moved.keypoints, 1.0, 16, 16);
  Tensor back = align_prediction(pred, from, TransformRecord{}, {});
  auto pt = decode_heatmap(back)[0];
  CHECK(std::abs(pt.x - 8) <= 1);
  CHECK(std::abs(pt.y - 5) <= 1);
}

TEST_CASE("warping a rendered heatmap tracks the transformed keypoints") {
  Rng rng(55);
  for (int it = 0; it < 20; ++it) {
    std::vector<Keypoint> kps = {
        {static_cast<double>(rng.uniform_int(5, 10)),
         static_cast<double>(rng.uniform_int(5, 10)), true}};
    TransformRecord r;
    r.rotation_deg = rng.uniform(-20.0, 20.0);
    r.scale = rng.uniform(0.9, 1.1);
    Rng dummy(0);
    auto res = apply_record(render_heatmap(kps, 1.5, 16, 16), kps, r, {},
                            dummy);
    REQUIRE(res.keypoints[0].visible);
    auto pt = decode_heatmap(res.image)[0];
    CHECK(std::abs(pt.x - res.keypoints[0].x) <= 1.0);
    CHECK(std::abs(pt.y - res.keypoints[0].y) <= 1.0);
  }
}
