#pragma once

#include <vector>

#include "coswin/ops.hpp"

namespace coswin {

// Batch norm over N,H,W per channel. In train mode normalizes by batch
// statistics and reports them through batch_mean/batch_var (biased variance)
// so the owning layer can update running stats. In eval mode `running_*`
// are used instead.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       const std::vector<T>& running_mean, const std::vector<T>& running_var,
                       bool train, T eps, std::vector<T>* batch_mean = nullptr,
                       std::vector<T>* batch_var = nullptr) {
  const Shape& xs = x.shape();
  check(xs.size() == 4, "batch_norm2d expects NCHW");
  int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  check(gamma.size() == C && beta.size() == C, "batch_norm2d affine param shape");
  int64_t m = N * H * W;
  if (train && m < 2) throw ContractError("batch_norm2d train mode needs at least 2 values per channel");

  std::vector<T> mu(static_cast<size_t>(C)), var(static_cast<size_t>(C));
  const T* p = x.data().data();
  if (train) {
    for (int64_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const T* plane = p + (n * C + c) * H * W;
        for (int64_t j = 0; j < H * W; ++j) acc += plane[j];
      }
      mu[c] = static_cast<T>(acc / m);
      double vacc = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const T* plane = p + (n * C + c) * H * W;
        for (int64_t j = 0; j < H * W; ++j) {
          double d = plane[j] - mu[c];
          vacc += d * d;
        }
      }
      var[c] = static_cast<T>(vacc / m);
    }
  } else {
    mu.assign(running_mean.begin(), running_mean.end());
    var.assign(running_var.begin(), running_var.end());
  }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;

  std::vector<T> out(static_cast<size_t>(x.size()));
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      T inv = T(1) / std::sqrt(var[c] + eps);
      const T* src = p + (n * C + c) * H * W;
      T* dst = out.data() + (n * C + c) * H * W;
      for (int64_t j = 0; j < H * W; ++j) dst[j] = pg[c] * (src[j] - mu[c]) * inv + pb[c];
    }

  return make_op<T>(xs, std::move(out), {x, gamma, beta},
                    [N, C, H, W, m, mu, var, eps, train](Node<T>& node) {
    auto& xn = *node.parents[0];
    auto& gn = *node.parents[1];
    auto& bn = *node.parents[2];
    if (xn.requires_grad) xn.ensure_grad();
    if (gn.requires_grad) gn.ensure_grad();
    if (bn.requires_grad) bn.ensure_grad();
    int64_t hw = H * W;
    for (int64_t c = 0; c < C; ++c) {
      T inv = T(1) / std::sqrt(var[c] + eps);
      double sum_g = 0.0, sum_gx = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const T* g = node.grad.data() + (n * C + c) * hw;
        const T* xv = xn.value.data() + (n * C + c) * hw;
        for (int64_t j = 0; j < hw; ++j) {
          T xhat = (xv[j] - mu[c]) * inv;
          sum_g += g[j];
          sum_gx += g[j] * xhat;
        }
      }
      if (gn.requires_grad) gn.grad[c] += static_cast<T>(sum_gx);
      if (bn.requires_grad) bn.grad[c] += static_cast<T>(sum_g);
      if (xn.requires_grad) {
        T gam = gn.value[c];
        if (train) {
          T mg = static_cast<T>(sum_g / m);
          T mgx = static_cast<T>(sum_gx / m);
          for (int64_t n = 0; n < N; ++n) {
            const T* g = node.grad.data() + (n * C + c) * hw;
            const T* xv = xn.value.data() + (n * C + c) * hw;
            T* dx = xn.grad.data() + (n * C + c) * hw;
            for (int64_t j = 0; j < hw; ++j) {
              T xhat = (xv[j] - mu[c]) * inv;
              dx[j] += gam * inv * (g[j] - mg - xhat * mgx);
            }
          }
        } else {
          for (int64_t n = 0; n < N; ++n) {
            const T* g = node.grad.data() + (n * C + c) * hw;
            T* dx = xn.grad.data() + (n * C + c) * hw;
            for (int64_t j = 0; j < hw; ++j) dx[j] += gam * inv * g[j];
          }
        }
      }
    }
  });
}

// Layer norm over the last dimension.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  const Shape& xs = x.shape();
  int64_t C = xs.back();
  check(C >= 1, "layer_norm needs a non-empty last dimension");
  check(gamma.size() == C && beta.size() == C, "layer_norm affine param shape");
  int64_t rows = x.size() / C;

  std::vector<T> out(static_cast<size_t>(x.size()));
  std::vector<T> mu(static_cast<size_t>(rows)), inv(static_cast<size_t>(rows));
  const T* p = x.data().data();
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = p + r * C;
    double acc = 0.0;
    for (int64_t c = 0; c < C; ++c) acc += row[c];
    T m = static_cast<T>(acc / C);
    double vacc = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      double d = row[c] - m;
      vacc += d * d;
    }
    T iv = T(1) / std::sqrt(static_cast<T>(vacc / C) + eps);
    mu[r] = m;
    inv[r] = iv;
    T* dst = out.data() + r * C;
    for (int64_t c = 0; c < C; ++c) dst[c] = pg[c] * (row[c] - m) * iv + pb[c];
  }

  return make_op<T>(xs, std::move(out), {x, gamma, beta},
                    [rows, C, mu, inv](Node<T>& node) {
    auto& xn = *node.parents[0];
    auto& gn = *node.parents[1];
    auto& bn = *node.parents[2];
    if (xn.requires_grad) xn.ensure_grad();
    if (gn.requires_grad) gn.ensure_grad();
    if (bn.requires_grad) bn.ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const T* g = node.grad.data() + r * C;
      const T* xv = xn.value.data() + r * C;
      double sum_g = 0.0, sum_gx = 0.0;
      for (int64_t c = 0; c < C; ++c) {
        T xhat = (xv[c] - mu[r]) * inv[r];
        T dxhat = g[c] * gn.value[c];
        if (gn.requires_grad) gn.grad[c] += g[c] * xhat;
        if (bn.requires_grad) bn.grad[c] += g[c];
        sum_g += dxhat;
        sum_gx += dxhat * xhat;
      }
      if (xn.requires_grad) {
        T mg = static_cast<T>(sum_g / C);
        T mgx = static_cast<T>(sum_gx / C);
        T* dx = xn.grad.data() + r * C;
        for (int64_t c = 0; c < C; ++c) {
          T xhat = (xv[c] - mu[r]) * inv[r];
          dx[c] += inv[r] * (g[c] * gn.value[c] - mg - xhat * mgx);
        }
      }
    }
  });
}

}  // namespace coswin
