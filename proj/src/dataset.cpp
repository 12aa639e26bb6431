#include "ubpl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>

#include "ubpl/rng.hpp"

namespace ubpl {

namespace {

constexpr double kTau = 6.28318530717958647692;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

template <typename T>
void shuffle_with(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.uniform_int(0, static_cast<int>(i) - 1)]);
  }
}

}  // namespace

Dataset gen_classification(int n, int num_classes, int image_size,
                           uint64_t seed) {
  if (n <= 0 || image_size < 8) {
    throw ShapeError("gen_classification: degenerate size");
  }
  // Ring frequencies 1.5 + 0.75k must stay below the grid's resolvable
  // band (image_size/2 cycles across the image), which caps the class count
  // for a given resolution.
  const int representable =
      static_cast<int>((image_size / 2.0 - 1.5) / 0.75) + 1;
  if (num_classes < 2 || num_classes > representable) {
    throw ShapeError("gen_classification: more classes than representable "
                     "ring patterns at this resolution");
  }
  Dataset d;
  d.task = Task::classification;
  d.name = "rings";
  d.seed = seed;
  d.image_size = image_size;
  d.num_classes = num_classes;
  d.samples.reserve(n);
  const double s = image_size;
  for (int i = 0; i < n; ++i) {
    const int k = i % num_classes;
    Rng rng = derive_stream(seed, Streams::dataset_gen, i);
    const double cx = (s - 1) / 2.0 + rng.uniform(-1.0, 1.0);
    const double cy = (s - 1) / 2.0 + rng.uniform(-1.0, 1.0);
    const double freq = 1.5 + 0.75 * k + rng.uniform(-0.08, 0.08);
    const double phase = kTau * k / num_classes + rng.uniform(-0.4, 0.4);
    std::vector<double> v(static_cast<size_t>(image_size) * image_size);
    for (int y = 0; y < image_size; ++y) {
      for (int x = 0; x < image_size; ++x) {
        const double r = std::hypot(x - cx, y - cy);
        const double base =
            0.5 + 0.42 * std::sin(kTau * freq * r / s + phase);
        v[static_cast<size_t>(y) * image_size + x] =
            clamp01(base + rng.gaussian() * 0.08);
      }
    }
    LabeledSample sample;
    sample.image = Tensor::leaf({1, image_size, image_size}, std::move(v));
    sample.class_label = k;
    d.samples.push_back(std::move(sample));
  }
  return d;
}

Dataset gen_keypoints(int n, int num_keypoints, int image_size,
                      uint64_t seed) {
  if (n <= 0 || image_size < 12) {
    throw ShapeError("gen_keypoints: degenerate size");
  }
  if (num_keypoints < 2 || num_keypoints > 9) {
    throw ShapeError("gen_keypoints: keypoint count outside 2..9");
  }
  Dataset d;
  d.task = Task::regression;
  d.name = "starfig";
  d.seed = seed;
  d.image_size = image_size;
  d.num_keypoints = num_keypoints;
  const int m = num_keypoints - 1;  // limbs
  d.flip_map.resize(num_keypoints);
  d.flip_map[0] = 0;
  for (int j = 0; j < m; ++j) d.flip_map[1 + j] = 1 + (m - j) % m;

  const double s = image_size;
  d.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = derive_stream(seed, Streams::dataset_gen, i);
    const double rx = (s - 1) / 2.0 + rng.uniform(-1.5, 1.5);
    const double ry = (s - 1) / 2.0 + rng.uniform(-1.5, 1.5);
    std::vector<Keypoint> kps(num_keypoints);
    kps[0] = {rx, ry, true};
    for (int j = 0; j < m; ++j) {
      const double ang = (-90.0 + 360.0 * j / m + rng.uniform(-22.0, 22.0)) *
                         kTau / 360.0;
      const double len = rng.uniform(3.5, 5.5);
      const double jx = rx + len * std::cos(ang);
      const double jy = ry + len * std::sin(ang);
      kps[1 + j] = {jx, jy,
                    jx >= 0.0 && jy >= 0.0 && jx <= s - 1 && jy <= s - 1};
    }

    std::vector<double> v(static_cast<size_t>(image_size) * image_size,
                          0.03);
    auto blot = [&](double px, double py, double amp, double sigma) {
      const double inv = 1.0 / (2.0 * sigma * sigma);
      for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
          const double d2 =
              (x - px) * (x - px) + (y - py) * (y - py);
          v[static_cast<size_t>(y) * image_size + x] +=
              amp * std::exp(-d2 * inv);
        }
      }
    };
    for (int j = 0; j < m; ++j) {
      for (int t = 1; t < 12; ++t) {
        blot(rx + (kps[1 + j].x - rx) * t / 12.0,
             ry + (kps[1 + j].y - ry) * t / 12.0, 0.28, 0.6);
      }
      blot(kps[1 + j].x, kps[1 + j].y, 0.85, 0.7);
    }
    blot(rx, ry, 0.95, 0.8);
    for (auto& px : v) px = clamp01(px + rng.gaussian() * 0.02);

    LabeledSample sample;
    sample.image = Tensor::leaf({1, image_size, image_size}, std::move(v));
    sample.keypoints = std::move(kps);
    d.samples.push_back(std::move(sample));
  }
  return d;
}

std::pair<Dataset, UnlabeledSet> split_labeled(const Dataset& dataset,
                                               const SplitSpec& spec) {
  if (spec.n_labeled <= 0 || spec.n_labeled > spec.n_total) {
    throw ShapeError("split: need 0 < n_labeled <= n_total");
  }
  if (dataset.size() < spec.n_total) {
    throw ShapeError("split: dataset smaller than n_total");
  }

  std::vector<int> pool(spec.n_total);
  std::iota(pool.begin(), pool.end(), 0);

  std::vector<int> chosen;
  chosen.reserve(spec.n_labeled);
  if (dataset.task == Task::classification) {
    std::vector<std::vector<int>> by_class(dataset.num_classes);
    for (int i : pool) {
      by_class.at(dataset.samples[i].class_label).push_back(i);
    }
    const int k = dataset.num_classes;
    for (int c = 0; c < k; ++c) {
      Rng rng(mix_seed(mix_seed(spec.seed, 0x5117), c));
      shuffle_with(by_class[c], rng);
      const int quota =
          spec.n_labeled / k + (c < spec.n_labeled % k ? 1 : 0);
      if (quota > static_cast<int>(by_class[c].size())) {
        throw ShapeError("split: class too small for stratified quota");
      }
      chosen.insert(chosen.end(), by_class[c].begin(),
                    by_class[c].begin() + quota);
    }
  } else {
    Rng rng(mix_seed(spec.seed, 0xdb5));
    shuffle_with(pool, rng);
    chosen.assign(pool.begin(), pool.begin() + spec.n_labeled);
    std::iota(pool.begin(), pool.end(), 0);
  }
  std::sort(chosen.begin(), chosen.end());

  Dataset labeled;
  labeled.task = dataset.task;
  labeled.name = dataset.name;
  labeled.seed = dataset.seed;
  labeled.image_size = dataset.image_size;
  labeled.num_classes = dataset.num_classes;
  labeled.num_keypoints = dataset.num_keypoints;
  labeled.flip_map = dataset.flip_map;

  std::vector<LabeledSample> hidden;
  size_t next = 0;
  for (int i = 0; i < spec.n_total; ++i) {
    if (next < chosen.size() && chosen[next] == i) {
      labeled.samples.push_back(dataset.samples[i]);
      ++next;
    } else {
      hidden.push_back(dataset.samples[i]);
    }
  }
  return {std::move(labeled), UnlabeledSet(dataset.task, std::move(hidden))};
}

namespace {

uint32_t read_be32(FILE* f, const char* what) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) {
    throw NumericError(std::string("idx: truncated ") + what);
  }
  return (static_cast<uint32_t>(b[0]) << 24) |
         (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  std::unique_ptr<FILE, FileCloser> fi(
      std::fopen(images_path.c_str(), "rb"));
  std::unique_ptr<FILE, FileCloser> fl(
      std::fopen(labels_path.c_str(), "rb"));
  if (!fi) throw NumericError("idx: cannot open " + images_path);
  if (!fl) throw NumericError("idx: cannot open " + labels_path);

  if (read_be32(fi.get(), "image magic") != 0x00000803u) {
    throw NumericError("idx: bad image magic");
  }
  const uint32_t n = read_be32(fi.get(), "image count");
  const uint32_t rows = read_be32(fi.get(), "rows");
  const uint32_t cols = read_be32(fi.get(), "cols");
  if (read_be32(fl.get(), "label magic") != 0x00000801u) {
    throw NumericError("idx: bad label magic");
  }
  if (read_be32(fl.get(), "label count") != n) {
    throw NumericError("idx: image/label count mismatch");
  }
  if (n > 0 && (rows == 0 || cols == 0 || rows != cols)) {
    throw NumericError("idx: only square non-empty images are supported");
  }

  Dataset d;
  d.task = Task::classification;
  d.name = "idx";
  d.image_size = static_cast<int>(rows);
  std::vector<unsigned char> pix(static_cast<size_t>(rows) * cols);
  int max_label = -1;
  for (uint32_t i = 0; i < n; ++i) {
    if (std::fread(pix.data(), 1, pix.size(), fi.get()) != pix.size()) {
      throw NumericError("idx: truncated image payload");
    }
    int lab = std::fgetc(fl.get());
    if (lab == EOF) throw NumericError("idx: truncated label payload");
    std::vector<double> v(pix.size());
    for (size_t j = 0; j < pix.size(); ++j) v[j] = pix[j] / 255.0;
    LabeledSample s;
    s.image = Tensor::leaf(
        {1, static_cast<int>(rows), static_cast<int>(cols)}, std::move(v));
    s.class_label = lab;
    max_label = std::max(max_label, lab);
    d.samples.push_back(std::move(s));
  }
  d.num_classes = max_label + 1;
  return d;
}

}  // namespace ubpl
