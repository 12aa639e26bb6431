#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ubpl {

using Shape = std::vector<int>;

// Raised when an operation produces NaN/Inf, or on malformed graphs.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int shape_size(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated when first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grad buffers.
  std::function<void(Node&)> backward_fn;

  int size() const { return static_cast<int>(values.size()); }
  void ensure_grad();
};

bool grad_enabled();

}  // namespace detail

// Disables graph construction in its scope (forward values still computed).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Value-semantics handle to a graph node. Copying shares the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v);  // constant scalar, shape {1}

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int size() const { return n_->size(); }
  const std::vector<double>& values() const { return n_->values; }
  double value() const;  // scalar tensors only

  bool requires_grad() const { return n_->requires_grad; }
  const std::vector<double>& grad() const;
  void zero_grad();

  // In-place mutation of a leaf's values (optimizer / EMA updates). Graph
  // nodes hold cached forward values and must never be mutated.
  std::vector<double>& leaf_values();

  detail::Node* node() const { return n_.get(); }
  const std::shared_ptr<detail::Node>& shared_node() const { return n_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}
  std::shared_ptr<detail::Node> n_;

  friend Tensor make_op(Shape shape, std::vector<double> values,
                        const std::vector<Tensor>& parents,
                        std::function<void(detail::Node&)> backward_fn,
                        const char* op_name);
};

// --- differentiable operations ---

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// Elementwise sum of same-shape tensors (one node, n parents).
Tensor sum_many(const std::vector<Tensor>& ts);
Tensor relu(const Tensor& a);
Tensor reshape(const Tensor& a, Shape new_shape);
// Row r of a 2-D tensor [R, C] -> [C].
Tensor row(const Tensor& a, int r);
// Cross-correlation; input [C_in,H,W], kernels [C_out,C_in,kH,kW].
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride,
              int padding);
// Adds bias[c] to every spatial position of channel c.
Tensor bias_add_channels(const Tensor& input, const Tensor& bias);
// Non-overlapping window mean; trailing rows/cols that do not fill a full
// window are truncated.
Tensor avgpool(const Tensor& input, int window);
// y = W x + b with W [K,C], x [C], b [K].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor softmax(const Tensor& logits);
// -sum(target * log softmax(logits)); gradient flows to logits only.
Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<double>& target);
Tensor mse(const Tensor& pred, const Tensor& target);
// Population covariance (1/N) sum (u_i - mean u)(v_i - mean v); divide-by-N
// so the ensemble variance decomposition identity is exact.
Tensor covariance(const Tensor& u, const Tensor& v);
// Constant copy; gradients never flow past it.
Tensor detach(const Tensor& a);

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
// calls; call zero_grad between steps.
void backward(const Tensor& loss);

}  // namespace ubpl
