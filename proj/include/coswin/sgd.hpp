#pragma once

#include <cmath>
#include <vector>

#include "coswin/layers.hpp"

namespace coswin {

// SGD with classical momentum. Weight decay lives in the loss (L2 term), not
// here.
template <typename T>
class Sgd {
 public:
  Sgd(ParamRegistry<T>& reg, T momentum = T(0.9)) : reg_(&reg), momentum_(momentum) {
    for (auto& p : reg.params())
      velocity_.emplace_back(static_cast<size_t>(p.tensor.size()), T(0));
  }

  void step(T lr) {
    auto& params = reg_->params();
    for (size_t pi = 0; pi < params.size(); ++pi) {
      auto& t = params[pi].tensor;
      auto& g = t.grad();
      auto& v = velocity_[pi];
      auto& val = t.data();
      for (size_t i = 0; i < v.size(); ++i) {
        v[i] = momentum_ * v[i] + g[i];
        val[i] -= lr * v[i];
      }
    }
  }

  std::vector<std::vector<T>>& velocity() { return velocity_; }

 private:
  ParamRegistry<T>* reg_;
  T momentum_;
  std::vector<std::vector<T>> velocity_;
};

inline double poly_lr(double base_lr, int64_t iter, int64_t total_iters, double power = 0.9) {
  if (total_iters <= 0) return base_lr;
  double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(total_iters);
  if (frac < 0.0) frac = 0.0;
  return base_lr * std::pow(frac, power);
}

}  // namespace coswin
