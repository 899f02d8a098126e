#pragma once

#include "coswin/layers.hpp"
#include "coswin/mask.hpp"

namespace coswin {

constexpr double kProbEps = 1e-7;

template <typename T>
Tensor<T> mask_to_tensor(const BinaryMask& m, Shape shape) {
  check(numel(shape) == m.size(), "mask/shape element count mismatch");
  std::vector<T> data(m.data.size());
  for (size_t i = 0; i < m.data.size(); ++i) data[i] = static_cast<T>(m.data[i]);
  return Tensor<T>::from(std::move(shape), std::move(data));
}

// Weighted binary cross entropy, averaged over all pixels of the batch:
//   L = -(1/N) sum[ alpha*w*g*log(p) + (1-g)*log(1-p) ]
// with w = 1 - road_fraction computed per sample from the target.
// pred/target: [N,1,H,W]; target entries must be 0/1.
template <typename T>
Tensor<T> wbce(const Tensor<T>& pred, const Tensor<T>& target, T alpha) {
  check(pred.shape() == target.shape(),
        "wbce shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  if (pred.size() == 0) throw DomainError("wbce on empty tensor");
  check(pred.rank() == 4, "wbce expects [N,1,H,W]");
  if (alpha <= T(0)) throw DomainError("wbce alpha must be positive");

  int64_t N = pred.dim(0);
  int64_t per = pred.size() / N;
  std::vector<T> w(static_cast<size_t>(N));
  const auto& g = target.data();
  for (int64_t n = 0; n < N; ++n) {
    double road = 0.0;
    for (int64_t j = 0; j < per; ++j) road += g[n * per + j];
    w[n] = static_cast<T>(1.0 - road / static_cast<double>(per));
  }
  Tensor<T> wmap = Tensor<T>::from({N, 1, 1, 1}, std::move(w));

  Tensor<T> p = clamp(pred, static_cast<T>(kProbEps), static_cast<T>(1.0 - kProbEps));
  Tensor<T> pos = mul(wmap, mul(target, log_op(p)));
  pos = scale(pos, alpha);
  Tensor<T> one_minus_g = add_scalar(neg(target), T(1));
  Tensor<T> one_minus_p = add_scalar(neg(p), T(1));
  Tensor<T> negterm = mul(one_minus_g, log_op(one_minus_p));
  return neg(mean_all(add(pos, negterm)));
}

// 0.5 * sum ||theta||^2 over decaying parameters (weights only; biases and
// normalization affine terms are excluded via the registry's decay flag).
template <typename T>
Tensor<T> l2_penalty(ParamRegistry<T>& reg) {
  Tensor<T> acc = Tensor<T>::zeros({1});
  for (auto& p : reg.params()) {
    if (!p.decay) continue;
    acc = add(acc, sum_all(mul(p.tensor, p.tensor)));
  }
  return scale(acc, T(0.5));
}

// Homoscedastic-uncertainty weighting of the two terms:
//   exp(-s1)*L_wbce + exp(-s2)*L2 + s1 + s2, with s1, s2 learnable scalars.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& wbce_loss, const Tensor<T>& l2_loss,
                     const Tensor<T>& s1, const Tensor<T>& s2) {
  Tensor<T> a = mul(exp_op(neg(s1)), wbce_loss);
  Tensor<T> b = mul(exp_op(neg(s2)), l2_loss);
  return add(add(a, b), add(s1, s2));
}

}  // namespace coswin
