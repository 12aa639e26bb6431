#include "ubpl/optim.hpp"

#include <cmath>

namespace ubpl {

Optimizer::Optimizer(OptimSpec spec, std::vector<Tensor> params)
    : spec_(spec), params_(std::move(params)) {
  if (spec_.lr < 0.0) throw NumericError("optimizer: negative learning rate");
  slot_m_.reserve(params_.size());
  for (const auto& p : params_) {
    slot_m_.emplace_back(p.size(), 0.0);
  }
  if (spec_.kind == OptimSpec::Kind::adam) {
    slot_v_.reserve(params_.size());
    for (const auto& p : params_) {
      slot_v_.emplace_back(p.size(), 0.0);
    }
  }
}

void Optimizer::step() {
  ++t_;
  if (spec_.kind == OptimSpec::Kind::adam) {
    const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      const auto& g = params_[i].grad();
      auto& m = slot_m_[i];
      auto& v = slot_v_[i];
      auto& w = params_[i].leaf_values();
      for (size_t j = 0; j < w.size(); ++j) {
        m[j] = spec_.beta1 * m[j] + (1.0 - spec_.beta1) * g[j];
        v[j] = spec_.beta2 * v[j] + (1.0 - spec_.beta2) * g[j] * g[j];
        w[j] -= spec_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + spec_.eps);
      }
    }
    return;
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& g = params_[i].grad();
    auto& vel = slot_m_[i];
    auto& w = params_[i].leaf_values();
    for (size_t j = 0; j < w.size(); ++j) {
      vel[j] = spec_.momentum * vel[j] + g[j];
      w[j] -= spec_.lr * (g[j] + spec_.momentum * vel[j]);
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<std::pair<std::string, std::vector<double>>> Optimizer::state()
    const {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  for (size_t i = 0; i < slot_m_.size(); ++i) {
    out.emplace_back("p" + std::to_string(i) + ".m", slot_m_[i]);
  }
  for (size_t i = 0; i < slot_v_.size(); ++i) {
    out.emplace_back("p" + std::to_string(i) + ".v", slot_v_[i]);
  }
  return out;
}

void Optimizer::restore(
    int64_t steps,
    const std::vector<std::pair<std::string, std::vector<double>>>& slots) {
  const size_t want = slot_m_.size() + slot_v_.size();
  if (slots.size() != want) {
    throw ShapeError("optimizer restore: slot count mismatch");
  }
  auto take = [&](const std::string& name, std::vector<double>& dst) {
    for (const auto& [n, v] : slots) {
      if (n == name) {
        if (v.size() != dst.size()) {
          throw ShapeError("optimizer restore: slot size mismatch for " + n);
        }
        dst = v;
        return;
      }
    }
    throw ShapeError("optimizer restore: missing slot " + name);
  };
  for (size_t i = 0; i < slot_m_.size(); ++i) {
    take("p" + std::to_string(i) + ".m", slot_m_[i]);
  }
  for (size_t i = 0; i < slot_v_.size(); ++i) {
    take("p" + std::to_string(i) + ".v", slot_v_[i]);
  }
  t_ = steps;
}

}  // namespace ubpl
