#pragma once

#include "coswin/layers.hpp"

namespace coswin {

// Per-pixel channel mean and max of a [N,C,H,W] map, each [N,1,H,W].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> channel_pool(const Tensor<T>& x) {
  check(x.rank() == 4 && x.dim(1) >= 1, "channel_pool expects [N,C,H,W]");
  Tensor<T> avg = reduce(x, ReduceKind::Mean, 1, /*keepdim=*/true);
  Tensor<T> mx = reduce(x, ReduceKind::Max, 1, /*keepdim=*/true);
  return {avg, mx};
}

// Context-guided skip filter: gate = Sigmoid(Conv(Concat(avg(X2), max(X2)))),
// output = gate * X1 + X2. The gate is one spatial map per sample, shared
// across channels.
template <typename T>
class CFilter {
 public:
  CFilter() = default;
  CFilter(ParamRegistry<T>& reg, const std::string& prefix, int64_t kernel = 7) {
    gate_conv_ = Conv2d<T>(reg, prefix + ".gate", 2, 1, kernel, 1, kernel / 2);
  }

  Tensor<T> gate(const Tensor<T>& x2) const {
    auto [avg, mx] = channel_pool(x2);
    Tensor<T> cat = concat<T>({avg, mx}, 1);
    return sigmoid(gate_conv_.forward(cat));
  }

  Tensor<T> forward(const Tensor<T>& x1, const Tensor<T>& x2) const {
    check(x1.shape() == x2.shape(),
          "cfilter inputs must match: " + shape_str(x1.shape()) + " vs " + shape_str(x2.shape()));
    Tensor<T> g = gate(x2);  // [N,1,H,W], broadcast over channels
    return add(mul(g, x1), x2);
  }

  Conv2d<T> gate_conv_;
};

}  // namespace coswin
