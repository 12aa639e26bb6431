#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ubpl/tensor.hpp"

namespace ubpl {

struct OptimSpec {
  enum class Kind { adam, nesterov_sgd };
  Kind kind = Kind::adam;
  double lr = 0.00025;
  // adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // nesterov_sgd
  double momentum = 0.9;
};

// Updates the given parameter leaves in place from their accumulated
// gradients. Slot buffers are exposed by name for checkpointing.
class Optimizer {
 public:
  Optimizer(OptimSpec spec, std::vector<Tensor> params);

  void step();
  void zero_grad();

  const OptimSpec& spec() const { return spec_; }
  int64_t steps_taken() const { return t_; }

  std::vector<std::pair<std::string, std::vector<double>>> state() const;
  void restore(
      int64_t steps,
      const std::vector<std::pair<std::string, std::vector<double>>>& slots);

 private:
  OptimSpec spec_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> slot_m_;  // adam first moment / sgd velocity
  std::vector<std::vector<double>> slot_v_;  // adam second moment
  int64_t t_ = 0;
};

}  // namespace ubpl
