#include "ubpl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace ubpl {

int shape_size(const Shape& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape");
    n *= d;
  }
  return n;
}

namespace detail {

void Node::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

namespace {
thread_local int g_no_grad_depth = 0;
}

bool grad_enabled() { return g_no_grad_depth == 0; }

}  // namespace detail

NoGradGuard::NoGradGuard() { ++detail::g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --detail::g_no_grad_depth; }

namespace {

void check_finite(const std::vector<double>& v, const char* op_name) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op_name) +
                         " produced a non-finite value");
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Tensor make_op(Shape shape, std::vector<double> values,
               const std::vector<Tensor>& parents,
               std::function<void(detail::Node&)> backward_fn,
               const char* op_name) {
  check_finite(values, op_name);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  if (detail::grad_enabled()) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.node()->requires_grad;
    if (needs) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.shared_node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

Tensor Tensor::leaf(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_size(shape) != static_cast<int>(values.size())) {
    throw ShapeError("leaf: shape does not match value count");
  }
  check_finite(values, "leaf");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  int n = shape_size(shape);
  return leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double v) { return leaf({1}, {v}, false); }

double Tensor::value() const {
  if (size() != 1) throw ShapeError("value(): tensor is not scalar");
  return n_->values[0];
}

const std::vector<double>& Tensor::grad() const {
  n_->ensure_grad();
  return n_->grad;
}

void Tensor::zero_grad() {
  n_->ensure_grad();
  std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
}

std::vector<double>& Tensor::leaf_values() {
  if (!n_->parents.empty()) {
    throw NumericError("leaf_values(): tensor is not a leaf");
  }
  return n_->values;
}

// --- elementwise ---

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_op(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& n) {
        for (auto& p : n.parents) {
          if (!p->requires_grad) continue;
          p->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
        }
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_op(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_op(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i)
            pa->grad[i] += n.grad[i] * pb->values[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i)
            pb->grad[i] += n.grad[i] * pa->values[i];
        }
      },
      "mul");
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (auto& x : out) x *= c;
  return make_op(
      a.shape(), std::move(out), {a},
      [c](detail::Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
          p->grad[i] += c * n.grad[i];
      },
      "scale");
}

Tensor sum_many(const std::vector<Tensor>& ts) {
  if (ts.empty()) throw ShapeError("sum_many: empty input");
  for (const auto& t : ts) require_same_shape(ts[0], t, "sum_many");
  std::vector<double> out(ts[0].values());
  for (size_t k = 1; k < ts.size(); ++k) {
    const auto& v = ts[k].values();
    for (size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return make_op(
      ts[0].shape(), std::move(out), ts,
      [](detail::Node& n) {
        for (auto& p : n.parents) {
          if (!p->requires_grad) continue;
          p->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
        }
      },
      "sum_many");
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values());
  for (auto& x : out) x = x > 0.0 ? x : 0.0;
  return make_op(
      a.shape(), std::move(out), {a},
      [](detail::Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
          if (p->values[i] > 0.0) p->grad[i] += n.grad[i];
        }
      },
      "relu");
}

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_size(new_shape) != a.size()) {
    throw ShapeError("reshape: element count mismatch");
  }
  return make_op(
      std::move(new_shape), a.values(), {a},
      [](detail::Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
      },
      "reshape");
}

Tensor row(const Tensor& a, int r) {
  if (a.shape().size() != 2) throw ShapeError("row: tensor is not 2-D");
  const int rows = a.shape()[0];
  const int cols = a.shape()[1];
  if (r < 0 || r >= rows) throw ShapeError("row: index out of range");
  std::vector<double> out(a.values().begin() + static_cast<size_t>(r) * cols,
                          a.values().begin() +
                              static_cast<size_t>(r + 1) * cols);
  return make_op(
      {cols}, std::move(out), {a},
      [r, cols](detail::Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int i = 0; i < cols; ++i) {
          p->grad[static_cast<size_t>(r) * cols + i] += n.grad[i];
        }
      },
      "row");
}

// --- convolution / pooling ---

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride,
              int padding) {
  if (input.shape().size() != 3) throw ShapeError("conv2d: input must be 3-D");
  if (kernels.shape().size() != 4) {
    throw ShapeError("conv2d: kernels must be 4-D");
  }
  if (stride <= 0) throw ShapeError("conv2d: non-positive stride");
  if (padding < 0) throw ShapeError("conv2d: negative padding");
  const int cin = input.shape()[0];
  const int h = input.shape()[1];
  const int w = input.shape()[2];
  const int cout = kernels.shape()[0];
  if (kernels.shape()[1] != cin) {
    throw ShapeError("conv2d: kernel input-channel mismatch");
  }
  const int kh = kernels.shape()[2];
  const int kw = kernels.shape()[3];
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (w + 2 * padding - kw) / stride + 1;

  const auto& x = input.values();
  const auto& k = kernels.values();
  std::vector<double> out(static_cast<size_t>(cout) * oh * ow, 0.0);
  for (int co = 0; co < cout; ++co) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        const int iy0 = oy * stride - padding;
        const int ix0 = ox * stride - padding;
        for (int ci = 0; ci < cin; ++ci) {
          const double* xc = &x[(static_cast<size_t>(ci) * h) * w];
          const double* kc =
              &k[((static_cast<size_t>(co) * cin + ci) * kh) * kw];
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            const double* xrow = xc + static_cast<size_t>(iy) * w;
            const double* krow = kc + static_cast<size_t>(ky) * kw;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= w) continue;
              acc += xrow[ix] * krow[kx];
            }
          }
        }
        out[(static_cast<size_t>(co) * oh + oy) * ow + ox] = acc;
      }
    }
  }

  auto bw = [cin, h, w, cout, kh, kw, oh, ow, stride,
             padding](detail::Node& n) {
    auto& px = n.parents[0];
    auto& pk = n.parents[1];
    const bool need_x = px->requires_grad;
    const bool need_k = pk->requires_grad;
    if (need_x) px->ensure_grad();
    if (need_k) pk->ensure_grad();
    const auto& g = n.grad;
    for (int co = 0; co < cout; ++co) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const double go = g[(static_cast<size_t>(co) * oh + oy) * ow + ox];
          if (go == 0.0) continue;
          const int iy0 = oy * stride - padding;
          const int ix0 = ox * stride - padding;
          for (int ci = 0; ci < cin; ++ci) {
            const size_t xoff = (static_cast<size_t>(ci) * h) * w;
            const size_t koff =
                ((static_cast<size_t>(co) * cin + ci) * kh) * kw;
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= w) continue;
                const size_t xi = xoff + static_cast<size_t>(iy) * w + ix;
                const size_t ki = koff + static_cast<size_t>(ky) * kw + kx;
                if (need_x) px->grad[xi] += go * pk->values[ki];
                if (need_k) pk->grad[ki] += go * px->values[xi];
              }
            }
          }
        }
      }
    }
  };
  return make_op({cout, oh, ow}, std::move(out), {input, kernels},
                 std::move(bw), "conv2d");
}

Tensor bias_add_channels(const Tensor& input, const Tensor& bias) {
  if (input.shape().size() != 3) {
    throw ShapeError("bias_add_channels: input must be 3-D");
  }
  const int c = input.shape()[0];
  const int hw = input.shape()[1] * input.shape()[2];
  if (bias.shape() != Shape{c}) {
    throw ShapeError("bias_add_channels: bias shape mismatch");
  }
  std::vector<double> out(input.values());
  const auto& b = bias.values();
  for (int ci = 0; ci < c; ++ci) {
    for (int i = 0; i < hw; ++i) out[static_cast<size_t>(ci) * hw + i] += b[ci];
  }
  return make_op(
      input.shape(), std::move(out), {input, bias},
      [c, hw](detail::Node& n) {
        auto& px = n.parents[0];
        auto& pb = n.parents[1];
        if (px->requires_grad) {
          px->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) px->grad[i] += n.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int ci = 0; ci < c; ++ci) {
            double acc = 0.0;
            for (int i = 0; i < hw; ++i) {
              acc += n.grad[static_cast<size_t>(ci) * hw + i];
            }
            pb->grad[ci] += acc;
          }
        }
      },
      "bias_add_channels");
}

Tensor avgpool(const Tensor& input, int window) {
  if (input.shape().size() != 3) {
    throw ShapeError("avgpool: input must be 3-D");
  }
  if (window <= 0) throw ShapeError("avgpool: non-positive window");
  const int c = input.shape()[0];
  const int h = input.shape()[1];
  const int w = input.shape()[2];
  if (window > h || window > w) {
    throw ShapeError("avgpool: window larger than input");
  }
  const int oh = h / window;
  const int ow = w / window;
  const double inv = 1.0 / (static_cast<double>(window) * window);
  const auto& x = input.values();
  std::vector<double> out(static_cast<size_t>(c) * oh * ow, 0.0);
  for (int ci = 0; ci < c; ++ci) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int dy = 0; dy < window; ++dy) {
          const double* xrow = &x[(static_cast<size_t>(ci) * h +
                                   (oy * window + dy)) *
                                  w];
          for (int dx = 0; dx < window; ++dx) {
            acc += xrow[ox * window + dx];
          }
        }
        out[(static_cast<size_t>(ci) * oh + oy) * ow + ox] = acc * inv;
      }
    }
  }
  return make_op(
      {c, oh, ow}, std::move(out), {input},
      [c, h, w, oh, ow, window, inv](detail::Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int ci = 0; ci < c; ++ci) {
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              const double g =
                  n.grad[(static_cast<size_t>(ci) * oh + oy) * ow + ox] * inv;
              for (int dy = 0; dy < window; ++dy) {
                double* row = &p->grad[(static_cast<size_t>(ci) * h +
                                        (oy * window + dy)) *
                                       w];
                for (int dx = 0; dx < window; ++dx) {
                  row[ox * window + dx] += g;
                }
              }
            }
          }
        }
      },
      "avgpool");
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.shape().size() != 1) throw ShapeError("linear: x must be 1-D");
  if (weight.shape().size() != 2) throw ShapeError("linear: weight must be 2-D");
  const int c = x.shape()[0];
  const int k = weight.shape()[0];
  if (weight.shape()[1] != c) throw ShapeError("linear: weight/x mismatch");
  if (bias.shape() != Shape{k}) throw ShapeError("linear: bias mismatch");
  const auto& xv = x.values();
  const auto& wv = weight.values();
  const auto& bv = bias.values();
  std::vector<double> out(k, 0.0);
  for (int r = 0; r < k; ++r) {
    double acc = bv[r];
    const double* wr = &wv[static_cast<size_t>(r) * c];
    for (int i = 0; i < c; ++i) acc += wr[i] * xv[i];
    out[r] = acc;
  }
  return make_op(
      {k}, std::move(out), {x, weight, bias},
      [c, k](detail::Node& n) {
        auto& px = n.parents[0];
        auto& pw = n.parents[1];
        auto& pb = n.parents[2];
        if (px->requires_grad) {
          px->ensure_grad();
          for (int r = 0; r < k; ++r) {
            const double g = n.grad[r];
            if (g == 0.0) continue;
            const double* wr = &pw->values[static_cast<size_t>(r) * c];
            for (int i = 0; i < c; ++i) px->grad[i] += g * wr[i];
          }
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          for (int r = 0; r < k; ++r) {
            const double g = n.grad[r];
            if (g == 0.0) continue;
            double* gw = &pw->grad[static_cast<size_t>(r) * c];
            for (int i = 0; i < c; ++i) gw[i] += g * px->values[i];
          }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int r = 0; r < k; ++r) pb->grad[r] += n.grad[r];
        }
      },
      "linear");
}

namespace {

std::vector<double> softmax_values(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace

Tensor softmax(const Tensor& logits) {
  if (logits.shape().size() != 1) {
    throw ShapeError("softmax: logits must be 1-D");
  }
  auto p = softmax_values(logits.values());
  return make_op(
      logits.shape(), std::move(p), {logits},
      [](detail::Node& n) {
        auto& pl = n.parents[0];
        if (!pl->requires_grad) return;
        pl->ensure_grad();
        double dot = 0.0;
        for (size_t i = 0; i < n.grad.size(); ++i) {
          dot += n.grad[i] * n.values[i];
        }
        for (size_t i = 0; i < n.grad.size(); ++i) {
          pl->grad[i] += n.values[i] * (n.grad[i] - dot);
        }
      },
      "softmax");
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<double>& target) {
  if (logits.shape().size() != 1) {
    throw ShapeError("softmax_cross_entropy: logits must be 1-D");
  }
  if (logits.values().size() != target.size()) {
    throw ShapeError("softmax_cross_entropy: class count mismatch");
  }
  double tsum = 0.0;
  for (double t : target) tsum += t;
  if (std::abs(tsum - 1.0) > 1e-9) {
    throw NumericError("softmax_cross_entropy: target does not sum to 1");
  }
  const auto& lv = logits.values();
  const double m = *std::max_element(lv.begin(), lv.end());
  double z = 0.0;
  for (double l : lv) z += std::exp(l - m);
  const double logz = std::log(z) + m;
  double loss = 0.0;
  for (size_t i = 0; i < lv.size(); ++i) {
    loss += target[i] * (logz - lv[i]);
  }
  auto p = softmax_values(lv);
  return make_op(
      {1}, {loss}, {logits},
      [p = std::move(p), target](detail::Node& n) {
        auto& pl = n.parents[0];
        if (!pl->requires_grad) return;
        pl->ensure_grad();
        const double g = n.grad[0];
        for (size_t i = 0; i < p.size(); ++i) {
          pl->grad[i] += g * (p[i] - target[i]);
        }
      },
      "softmax_cross_entropy");
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse");
  const auto& a = pred.values();
  const auto& b = target.values();
  const double inv = 1.0 / static_cast<double>(a.size());
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  acc *= inv;
  return make_op(
      {1}, {acc}, {pred, target},
      [inv](detail::Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        const double g = 2.0 * inv * n.grad[0];
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < pa->values.size(); ++i) {
            pa->grad[i] += g * (pa->values[i] - pb->values[i]);
          }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < pb->values.size(); ++i) {
            pb->grad[i] -= g * (pa->values[i] - pb->values[i]);
          }
        }
      },
      "mse");
}

Tensor covariance(const Tensor& u, const Tensor& v) {
  if (u.shape().size() != 1 || v.shape().size() != 1) {
    throw ShapeError("covariance: inputs must be 1-D");
  }
  if (u.size() != v.size()) throw ShapeError("covariance: length mismatch");
  const int n = u.size();
  if (n == 0) throw ShapeError("covariance: empty input");
  const auto& uv = u.values();
  const auto& vv = v.values();
  const double inv = 1.0 / n;
  double um = 0.0, vm = 0.0;
  for (int i = 0; i < n; ++i) {
    um += uv[i];
    vm += vv[i];
  }
  um *= inv;
  vm *= inv;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += (uv[i] - um) * (vv[i] - vm);
  acc *= inv;
  return make_op(
      {1}, {acc}, {u, v},
      [inv, um, vm](detail::Node& n_) {
        auto& pu = n_.parents[0];
        auto& pv = n_.parents[1];
        const double g = n_.grad[0] * inv;
        if (pu->requires_grad) {
          pu->ensure_grad();
          for (size_t i = 0; i < pu->values.size(); ++i) {
            pu->grad[i] += g * (pv->values[i] - vm);
          }
        }
        if (pv->requires_grad) {
          pv->ensure_grad();
          for (size_t i = 0; i < pv->values.size(); ++i) {
            pv->grad[i] += g * (pu->values[i] - um);
          }
        }
      },
      "covariance");
}

Tensor detach(const Tensor& a) { return Tensor::leaf(a.shape(), a.values()); }

// --- backward ---

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar");
  detail::Node* root = loss.node();
  if (!root->requires_grad) {
    throw NumericError("backward: loss does not require grad");
  }

  // Iterative DFS post-order; also detects cycles (impossible by
  // construction, asserted anyway).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> done;
  std::unordered_set<detail::Node*> in_stack;
  struct Frame {
    detail::Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  in_stack.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::Node* p = f.node->parents[f.next_parent++].get();
      if (!p->requires_grad || done.count(p)) continue;
      if (in_stack.count(p)) throw NumericError("backward: graph cycle");
      stack.push_back({p, 0});
      in_stack.insert(p);
    } else {
      order.push_back(f.node);
      done.insert(f.node);
      in_stack.erase(f.node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch for this sweep; leaf grads accumulate.
  for (detail::Node* n : order) {
    if (!n->parents.empty()) {
      n->grad.assign(n->values.size(), 0.0);
    } else {
      n->ensure_grad();
    }
  }
  if (root->parents.empty()) {
    root->grad[0] += 1.0;
  } else {
    root->grad[0] = 1.0;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
  for (detail::Node* n : order) {
    for (double g : n->grad) {
      if (!std::isfinite(g)) {
        throw NumericError("backward produced a non-finite gradient");
      }
    }
  }
}

}  // namespace ubpl
