#pragma once

#include <vector>

#include "coswin/ops.hpp"

namespace coswin {

namespace detail {

// col is [C*k*k, Ho*Wo] for one sample, zero-padded borders.
template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int64_t k, int64_t stride,
            int64_t pad, int64_t Ho, int64_t Wo, T* col) {
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t ki = 0; ki < k; ++ki) {
      for (int64_t kj = 0; kj < k; ++kj) {
        T* dst = col + ((c * k + ki) * k + kj) * Ho * Wo;
        for (int64_t oh = 0; oh < Ho; ++oh) {
          int64_t ih = oh * stride + ki - pad;
          if (ih < 0 || ih >= H) {
            for (int64_t ow = 0; ow < Wo; ++ow) dst[oh * Wo + ow] = T(0);
            continue;
          }
          const T* src = x + (c * H + ih) * W;
          for (int64_t ow = 0; ow < Wo; ++ow) {
            int64_t iw = ow * stride + kj - pad;
            dst[oh * Wo + ow] = (iw >= 0 && iw < W) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int64_t C, int64_t H, int64_t W, int64_t k, int64_t stride,
                int64_t pad, int64_t Ho, int64_t Wo, T* x) {
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t ki = 0; ki < k; ++ki) {
      for (int64_t kj = 0; kj < k; ++kj) {
        const T* src = col + ((c * k + ki) * k + kj) * Ho * Wo;
        for (int64_t oh = 0; oh < Ho; ++oh) {
          int64_t ih = oh * stride + ki - pad;
          if (ih < 0 || ih >= H) continue;
          T* dst = x + (c * H + ih) * W;
          for (int64_t ow = 0; ow < Wo; ++ow) {
            int64_t iw = ow * stride + kj - pad;
            if (iw >= 0 && iw < W) dst[iw] += src[oh * Wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: [N,Cin,H,W], w: [Cout,Cin,k,k], b: optional [Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b,
                 int64_t stride, int64_t pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  check(xs.size() == 4 && ws.size() == 4, "conv2d expects 4-d input and weight");
  check(ws[2] == ws[3], "conv2d expects square kernels");
  int64_t N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  int64_t Cout = ws[0], k = ws[2];
  check(ws[1] == Cin, "conv2d channel mismatch: input " + shape_str(xs) + " weight " + shape_str(ws));
  check(k <= H + 2 * pad && k <= W + 2 * pad, "conv2d kernel larger than padded input");
  if (b) check(b->rank() == 1 && b->dim(0) == Cout, "conv2d bias shape");
  int64_t Ho = (H + 2 * pad - k) / stride + 1;
  int64_t Wo = (W + 2 * pad - k) / stride + 1;
  int64_t ck2 = Cin * k * k;

  std::vector<T> out(static_cast<size_t>(N * Cout * Ho * Wo));
  std::vector<T> col(static_cast<size_t>(ck2 * Ho * Wo));
  const T* px = x.data().data();
  const T* pw = w.data().data();
  for (int64_t n = 0; n < N; ++n) {
    detail::im2col(px + n * Cin * H * W, Cin, H, W, k, stride, pad, Ho, Wo, col.data());
    detail::CMatMap<T> Wm(pw, Cout, ck2);
    detail::CMatMap<T> Cm(col.data(), ck2, Ho * Wo);
    detail::MatMap<T> Om(out.data() + n * Cout * Ho * Wo, Cout, Ho * Wo);
    Om.noalias() = Wm * Cm;
    if (b) {
      const T* pb = b->data().data();
      for (int64_t co = 0; co < Cout; ++co) {
        T bv = pb[co];
        T* dst = out.data() + (n * Cout + co) * Ho * Wo;
        for (int64_t j = 0; j < Ho * Wo; ++j) dst[j] += bv;
      }
    }
  }

  auto bwd = [N, Cin, H, W, Cout, k, stride, pad, Ho, Wo, ck2](Node<T>& node) {
    auto& xn = *node.parents[0];
    auto& wn = *node.parents[1];
    Node<T>* bn = node.parents.size() > 2 ? node.parents[2].get() : nullptr;
    std::vector<T> col2(static_cast<size_t>(ck2 * Ho * Wo));
    std::vector<T> dcol(static_cast<size_t>(ck2 * Ho * Wo));
    if (xn.requires_grad) xn.ensure_grad();
    if (wn.requires_grad) wn.ensure_grad();
    if (bn && bn->requires_grad) bn->ensure_grad();
    for (int64_t n = 0; n < N; ++n) {
      const T* g = node.grad.data() + n * Cout * Ho * Wo;
      detail::CMatMap<T> Gm(g, Cout, Ho * Wo);
      if (wn.requires_grad) {
        detail::im2col(xn.value.data() + n * Cin * H * W, Cin, H, W, k, stride, pad, Ho,
                       Wo, col2.data());
        detail::CMatMap<T> Cm(col2.data(), ck2, Ho * Wo);
        detail::MatMap<T> dW(wn.grad.data(), Cout, ck2);
        dW.noalias() += Gm * Cm.transpose();
      }
      if (xn.requires_grad) {
        detail::CMatMap<T> Wm(wn.value.data(), Cout, ck2);
        detail::MatMap<T> dC(dcol.data(), ck2, Ho * Wo);
        dC.noalias() = Wm.transpose() * Gm;
        detail::col2im_add(dcol.data(), Cin, H, W, k, stride, pad, Ho, Wo,
                           xn.grad.data() + n * Cin * H * W);
      }
      if (bn && bn->requires_grad) {
        for (int64_t co = 0; co < Cout; ++co) {
          T acc = T(0);
          const T* row = g + co * Ho * Wo;
          for (int64_t j = 0; j < Ho * Wo; ++j) acc += row[j];
          bn->grad[co] += acc;
        }
      }
    }
  };

  if (b)
    return make_op<T>({N, Cout, Ho, Wo}, std::move(out), {x, w, *b}, bwd);
  return make_op<T>({N, Cout, Ho, Wo}, std::move(out), {x, w}, bwd);
}

// x: [N,Cin,H,W], w: [Cin,Cout,k,k], b: optional [Cout]. Output (H-1)*stride + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b,
                           int64_t stride) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  check(xs.size() == 4 && ws.size() == 4, "conv_transpose2d expects 4-d tensors");
  int64_t N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  int64_t Cout = ws[1], k = ws[2];
  check(ws[0] == Cin && ws[2] == ws[3], "conv_transpose2d weight shape " + shape_str(ws));
  int64_t Ho = (H - 1) * stride + k;
  int64_t Wo = (W - 1) * stride + k;
  int64_t ck2 = Cout * k * k;

  std::vector<T> out(static_cast<size_t>(N * Cout * Ho * Wo), T(0));
  std::vector<T> col(static_cast<size_t>(ck2 * H * W));
  const T* px = x.data().data();
  const T* pw = w.data().data();
  for (int64_t n = 0; n < N; ++n) {
    detail::CMatMap<T> Wm(pw, Cin, ck2);
    detail::CMatMap<T> Xm(px + n * Cin * H * W, Cin, H * W);
    detail::MatMap<T> Cm(col.data(), ck2, H * W);
    Cm.noalias() = Wm.transpose() * Xm;
    detail::col2im_add(col.data(), Cout, Ho, Wo, k, stride, /*pad=*/0, H, W,
                       out.data() + n * Cout * Ho * Wo);
    if (b) {
      const T* pb = b->data().data();
      for (int64_t co = 0; co < Cout; ++co) {
        T bv = pb[co];
        T* dst = out.data() + (n * Cout + co) * Ho * Wo;
        for (int64_t j = 0; j < Ho * Wo; ++j) dst[j] += bv;
      }
    }
  }

  auto bwd = [N, Cin, H, W, Cout, k, stride, Ho, Wo, ck2](Node<T>& node) {
    auto& xn = *node.parents[0];
    auto& wn = *node.parents[1];
    Node<T>* bn = node.parents.size() > 2 ? node.parents[2].get() : nullptr;
    std::vector<T> dcol(static_cast<size_t>(ck2 * H * W));
    if (xn.requires_grad) xn.ensure_grad();
    if (wn.requires_grad) wn.ensure_grad();
    if (bn && bn->requires_grad) bn->ensure_grad();
    for (int64_t n = 0; n < N; ++n) {
      const T* g = node.grad.data() + n * Cout * Ho * Wo;
      detail::im2col(g, Cout, Ho, Wo, k, stride, /*pad=*/0, H, W, dcol.data());
      detail::CMatMap<T> dC(dcol.data(), ck2, H * W);
      if (xn.requires_grad) {
        detail::CMatMap<T> Wm(wn.value.data(), Cin, ck2);
        detail::MatMap<T> dX(xn.grad.data() + n * Cin * H * W, Cin, H * W);
        dX.noalias() += Wm * dC;
      }
      if (wn.requires_grad) {
        detail::CMatMap<T> Xm(xn.value.data() + n * Cin * H * W, Cin, H * W);
        detail::MatMap<T> dW(wn.grad.data(), Cin, ck2);
        dW.noalias() += Xm * dC.transpose();
      }
      if (bn && bn->requires_grad) {
        for (int64_t co = 0; co < Cout; ++co) {
          T acc = T(0);
          const T* row = g + co * Ho * Wo;
          for (int64_t j = 0; j < Ho * Wo; ++j) acc += row[j];
          bn->grad[co] += acc;
        }
      }
    }
  };

  if (b)
    return make_op<T>({N, Cout, Ho, Wo}, std::move(out), {x, w, *b}, bwd);
  return make_op<T>({N, Cout, Ho, Wo}, std::move(out), {x, w}, bwd);
}

// 2x2/stride-2 style max pooling; gradient goes to the first argmax in
// row-major window order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int64_t k, int64_t stride) {
  const Shape& xs = x.shape();
  check(xs.size() == 4, "maxpool2d expects NCHW");
  int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  check(k <= H && k <= W, "maxpool2d kernel larger than input");
  int64_t Ho = (H - k) / stride + 1;
  int64_t Wo = (W - k) / stride + 1;
  std::vector<T> out(static_cast<size_t>(N * C * Ho * Wo));
  std::vector<int64_t> arg(out.size());
  const T* p = x.data().data();
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* plane = p + nc * H * W;
    for (int64_t oh = 0; oh < Ho; ++oh)
      for (int64_t ow = 0; ow < Wo; ++ow) {
        T best = plane[oh * stride * W + ow * stride];
        int64_t bi = oh * stride * W + ow * stride;
        for (int64_t ki = 0; ki < k; ++ki)
          for (int64_t kj = 0; kj < k; ++kj) {
            int64_t idx = (oh * stride + ki) * W + ow * stride + kj;
            if (plane[idx] > best) { best = plane[idx]; bi = idx; }
          }
        out[nc * Ho * Wo + oh * Wo + ow] = best;
        arg[nc * Ho * Wo + oh * Wo + ow] = nc * H * W + bi;
      }
  }
  return make_op<T>({N, C, Ho, Wo}, std::move(out), {x}, [arg](Node<T>& node) {
    auto& parent = *node.parents[0];
    parent.ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) parent.grad[arg[i]] += node.grad[i];
  });
}

}  // namespace coswin
