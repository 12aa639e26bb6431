#include "ubpl/nn.hpp"

#include <cmath>

#include "ubpl/rng.hpp"

namespace ubpl {

namespace {

std::vector<double> he_values(Rng& rng, int n, int fan_in) {
  const double s = std::sqrt(2.0 / fan_in);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.gaussian() * s;
  return v;
}

}  // namespace

Model::Model(const ModelSpec& spec) : spec_(spec) {
  if (spec.in_channels <= 0 || spec.height <= 0 || spec.width <= 0 ||
      spec.num_outputs <= 0 || spec.widths.empty()) {
    throw ShapeError("model spec: non-positive dimension");
  }
  int layer = 0;
  auto add_conv = [&](const std::string& name, int cin, int cout) {
    Rng rng = derive_stream(spec.seed, Streams::model_init, layer++);
    params_.push_back(Tensor::leaf({cout, cin, 3, 3},
                                   he_values(rng, cout * cin * 9, cin * 9),
                                   true));
    names_.push_back(name + ".w");
    params_.push_back(Tensor::zeros({cout}, true));
    names_.push_back(name + ".b");
  };

  if (spec.task == Task::classification) {
    int h = spec.height, w = spec.width;
    int cin = spec.in_channels;
    for (size_t s = 0; s < spec.widths.size(); ++s) {
      add_conv("conv" + std::to_string(s + 1), cin, spec.widths[s]);
      cin = spec.widths[s];
      if (h / 2 < 1 || w / 2 < 1) {
        throw ShapeError("model spec: pooling below 1x1");
      }
      h /= 2;
      w /= 2;
    }
    tap_h_ = h;
    tap_w_ = w;
    Rng rng = derive_stream(spec.seed, Streams::model_init, layer++);
    const int in_dim = cin * h * w;
    params_.push_back(Tensor::leaf({spec.num_outputs, in_dim},
                                   he_values(rng, spec.num_outputs * in_dim,
                                             in_dim),
                                   true));
    names_.push_back("head.w");
    params_.push_back(Tensor::zeros({spec.num_outputs}, true));
    names_.push_back("head.b");
  } else {
    int cin = spec.in_channels;
    for (size_t s = 0; s < spec.widths.size(); ++s) {
      add_conv("conv" + std::to_string(s + 1), cin, spec.widths[s]);
      cin = spec.widths[s];
    }
    if (spec.height < 4 || spec.width < 4) {
      throw ShapeError("model spec: feature tap pooling below 1x1");
    }
    tap_h_ = spec.height / 4;
    tap_w_ = spec.width / 4;
    add_conv("head", cin, spec.num_outputs);
  }
}

ModelForward Model::forward(const Tensor& image) const {
  if (image.shape() !=
      Shape{spec_.in_channels, spec_.height, spec_.width}) {
    throw ShapeError("forward: input shape mismatch");
  }
  const int stages = static_cast<int>(spec_.widths.size());
  Tensor x = image;
  if (spec_.task == Task::classification) {
    for (int s = 0; s < stages; ++s) {
      x = avgpool(relu(bias_add_channels(
                      conv2d(x, params_[2 * s], 1, 1), params_[2 * s + 1])),
                  2);
    }
    FeatureTap tap{x};
    Tensor logits = linear(reshape(x, {x.size()}), params_[2 * stages],
                           params_[2 * stages + 1]);
    return {logits, tap};
  }
  for (int s = 0; s < stages; ++s) {
    x = relu(bias_add_channels(conv2d(x, params_[2 * s], 1, 1),
                               params_[2 * s + 1]));
  }
  FeatureTap tap{avgpool(x, 4)};
  Tensor maps = bias_add_channels(conv2d(x, params_[2 * stages], 1, 1),
                                  params_[2 * stages + 1]);
  return {maps, tap};
}

int Model::param_count() const {
  int n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

Model Model::clone() const {
  Model m(spec_);
  for (size_t i = 0; i < params_.size(); ++i) {
    m.params_[i].leaf_values() = params_[i].values();
  }
  return m;
}

std::vector<double> Model::flat_params() const {
  std::vector<double> v;
  v.reserve(param_count());
  for (const auto& p : params_) {
    v.insert(v.end(), p.values().begin(), p.values().end());
  }
  return v;
}

void Model::set_flat_params(const std::vector<double>& v) {
  if (static_cast<int>(v.size()) != param_count()) {
    throw ShapeError("set_flat_params: length mismatch");
  }
  size_t off = 0;
  for (auto& p : params_) {
    auto& dst = p.leaf_values();
    std::copy(v.begin() + off, v.begin() + off + dst.size(), dst.begin());
    off += dst.size();
  }
}

void Model::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<DecodedPoint> decode_heatmap(const Tensor& heatmap) {
  if (heatmap.shape().size() != 3) {
    throw ShapeError("decode_heatmap: heatmap must be [K,H,W]");
  }
  const int k = heatmap.shape()[0];
  const int h = heatmap.shape()[1];
  const int w = heatmap.shape()[2];
  const auto& v = heatmap.values();
  std::vector<DecodedPoint> out(k);
  for (int c = 0; c < k; ++c) {
    int best = 0;
    const double* ch = &v[static_cast<size_t>(c) * h * w];
    for (int i = 1; i < h * w; ++i) {
      if (ch[i] > ch[best]) best = i;
    }
    out[c].x = best % w;
    out[c].y = best / w;
    out[c].confidence = std::min(1.0, std::max(0.0, ch[best]));
  }
  return out;
}

Tensor render_heatmap(const std::vector<Keypoint>& keypoints, double sigma,
                      int height, int width) {
  if (sigma <= 0.0) throw NumericError("render_heatmap: sigma must be > 0");
  if (height <= 0 || width <= 0) {
    throw ShapeError("render_heatmap: non-positive map size");
  }
  const int k = static_cast<int>(keypoints.size());
  std::vector<double> v(static_cast<size_t>(k) * height * width, 0.0);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (int c = 0; c < k; ++c) {
    if (!keypoints[c].visible) continue;
    double* ch = &v[static_cast<size_t>(c) * height * width];
    for (int r = 0; r < height; ++r) {
      for (int col = 0; col < width; ++col) {
        const double dx = col - keypoints[c].x;
        const double dy = r - keypoints[c].y;
        ch[static_cast<size_t>(r) * width + col] =
            std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
    }
  }
  return Tensor::leaf({k, height, width}, std::move(v));
}

}  // namespace ubpl
