#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <vector>

#include "coswin/tensor.hpp"

namespace coswin {

namespace detail {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using CMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  check(a.size() == b.size(),
        "broadcast requires equal rank, got " + shape_str(a) + " vs " + shape_str(b));
  Shape out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) out[i] = a[i];
    else if (a[i] == 1) out[i] = b[i];
    else if (b[i] == 1) out[i] = a[i];
    else
      throw ShapeError("incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
  }
  return out;
}

// Strides with 0 on broadcast dims.
inline std::vector<int64_t> bcast_strides(const Shape& s, const Shape& out) {
  auto st = row_strides(s);
  for (size_t i = 0; i < s.size(); ++i)
    if (s[i] == 1 && out[i] != 1) st[i] = 0;
  return st;
}

// Odometer walk over `out`, calling f(out_flat, a_off, b_off).
template <typename F>
void bcast_walk(const Shape& out, const std::vector<int64_t>& sa,
                const std::vector<int64_t>& sb, F&& f) {
  const size_t r = out.size();
  int64_t n = numel(out);
  std::vector<int64_t> coord(r, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (size_t d = r; d-- > 0;) {
      ++coord[d];
      ia += sa[d];
      ib += sb[d];
      if (coord[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      coord[d] = 0;
    }
  }
}

}  // namespace detail

enum class BinKind { Add, Sub, Mul };

template <typename T>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, BinKind kind) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool same = (sa == sb);
  Shape out_shape = same ? sa : detail::broadcast_shape(sa, sb);
  int64_t n = numel(out_shape);
  std::vector<T> out(static_cast<size_t>(n));

  const T* pa = a.data().data();
  const T* pb = b.data().data();
  if (same) {
    switch (kind) {
      case BinKind::Add:
        for (int64_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
        break;
      case BinKind::Sub:
        for (int64_t i = 0; i < n; ++i) out[i] = pa[i] - pb[i];
        break;
      case BinKind::Mul:
        for (int64_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
        break;
    }
  } else {
    auto stra = detail::bcast_strides(sa, out_shape);
    auto strb = detail::bcast_strides(sb, out_shape);
    detail::bcast_walk(out_shape, stra, strb, [&](int64_t i, int64_t ia, int64_t ib) {
      switch (kind) {
        case BinKind::Add: out[i] = pa[ia] + pb[ib]; break;
        case BinKind::Sub: out[i] = pa[ia] - pb[ib]; break;
        case BinKind::Mul: out[i] = pa[ia] * pb[ib]; break;
      }
    });
  }

  return make_op<T>(
      out_shape, std::move(out), {a, b},
      [same, kind, out_shape](Node<T>& node) {
        auto& an = *node.parents[0];
        auto& bn = *node.parents[1];
        const T* g = node.grad.data();
        const int64_t n2 = static_cast<int64_t>(node.value.size());
        if (an.requires_grad) an.ensure_grad();
        if (bn.requires_grad) bn.ensure_grad();
        if (same) {
          for (int64_t i = 0; i < n2; ++i) {
            switch (kind) {
              case BinKind::Add:
                if (an.requires_grad) an.grad[i] += g[i];
                if (bn.requires_grad) bn.grad[i] += g[i];
                break;
              case BinKind::Sub:
                if (an.requires_grad) an.grad[i] += g[i];
                if (bn.requires_grad) bn.grad[i] -= g[i];
                break;
              case BinKind::Mul:
                if (an.requires_grad) an.grad[i] += g[i] * bn.value[i];
                if (bn.requires_grad) bn.grad[i] += g[i] * an.value[i];
                break;
            }
          }
        } else {
          auto stra = detail::bcast_strides(an.shape, out_shape);
          auto strb = detail::bcast_strides(bn.shape, out_shape);
          detail::bcast_walk(out_shape, stra, strb, [&](int64_t i, int64_t ia, int64_t ib) {
            switch (kind) {
              case BinKind::Add:
                if (an.requires_grad) an.grad[ia] += g[i];
                if (bn.requires_grad) bn.grad[ib] += g[i];
                break;
              case BinKind::Sub:
                if (an.requires_grad) an.grad[ia] += g[i];
                if (bn.requires_grad) bn.grad[ib] -= g[i];
                break;
              case BinKind::Mul:
                if (an.requires_grad) an.grad[ia] += g[i] * bn.value[ib];
                if (bn.requires_grad) bn.grad[ib] += g[i] * an.value[ia];
                break;
            }
          });
        }
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinKind::Add); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinKind::Sub); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinKind::Mul); }

// ---------------------------------------------------------------------------
// Unary elementwise ops. Derivatives are expressed in terms of input x and
// output y so each rule stays closed form.

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_op(const Tensor<T>& a, Fwd fwd, Bwd dydx) {
  int64_t n = a.size();
  std::vector<T> out(static_cast<size_t>(n));
  const T* pa = a.data().data();
  for (int64_t i = 0; i < n; ++i) out[i] = fwd(pa[i]);
  return make_op<T>(a.shape(), std::move(out), {a}, [dydx](Node<T>& node) {
    auto& an = *node.parents[0];
    an.ensure_grad();
    const int64_t n2 = static_cast<int64_t>(node.value.size());
    for (int64_t i = 0; i < n2; ++i)
      an.grad[i] += node.grad[i] * dydx(an.value[i], node.value[i]);
  });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& a) {
  return unary_op(a, [](T x) { return std::tanh(x); },
                  [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary_op(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                  [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary_op(a, [](T x) { return x > T(0) ? x : T(0); },
                  [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

// tanh-form GELU: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  return unary_op(
      a,
      [](T x) {
        double xd = static_cast<double>(x);
        double u = kC * (xd + kA * xd * xd * xd);
        return static_cast<T>(0.5 * xd * (1.0 + std::tanh(u)));
      },
      [](T x, T) {
        double xd = static_cast<double>(x);
        double u = kC * (xd + kA * xd * xd * xd);
        double t = std::tanh(u);
        double sech2 = 1.0 - t * t;
        double du = kC * (1.0 + 3.0 * kA * xd * xd);
        return static_cast<T>(0.5 * (1.0 + t) + 0.5 * xd * sech2 * du);
      });
}

template <typename T>
Tensor<T> exp_op(const Tensor<T>& a) {
  return unary_op(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log_op(const Tensor<T>& a) {
  for (T v : a.data())
    if (!(v > T(0))) throw DomainError("log of non-positive input");
  return unary_op(a, [](T x) { return std::log(x); },
                  [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return unary_op(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  return unary_op(a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  return unary_op(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

// Gradient passes through strictly inside (lo, hi), zero where clamped.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  return unary_op(a, [lo, hi](T x) { return std::min(hi, std::max(lo, x)); },
                  [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Matrix products. Rank 2: [m,k]x[k,n]. Rank 3: batched with equal leading
// extent; trans_b treats b as [B,n,k].

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_b = false) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  check(sa.size() == sb.size() && (sa.size() == 2 || sa.size() == 3),
        "matmul expects equal rank 2 or 3, got " + shape_str(sa) + " vs " + shape_str(sb));
  int64_t batch = (sa.size() == 3) ? sa[0] : 1;
  if (sa.size() == 3) check(sb[0] == batch, "matmul batch mismatch");
  size_t off = sa.size() - 2;
  int64_t m = sa[off], k = sa[off + 1];
  int64_t kb = trans_b ? sb[off + 1] : sb[off];
  int64_t nn = trans_b ? sb[off] : sb[off + 1];
  check(k == kb, "matmul inner dimension mismatch " + shape_str(sa) + " vs " + shape_str(sb));

  Shape out_shape = (sa.size() == 3) ? Shape{batch, m, nn} : Shape{m, nn};
  std::vector<T> out(static_cast<size_t>(batch * m * nn));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for (int64_t bi = 0; bi < batch; ++bi) {
    detail::CMatMap<T> A(pa + bi * m * k, m, k);
    detail::MatMap<T> C(out.data() + bi * m * nn, m, nn);
    if (trans_b) {
      detail::CMatMap<T> B(pb + bi * nn * k, nn, k);
      C.noalias() = A * B.transpose();
    } else {
      detail::CMatMap<T> B(pb + bi * k * nn, k, nn);
      C.noalias() = A * B;
    }
  }

  return make_op<T>(out_shape, std::move(out), {a, b},
                    [batch, m, k, nn, trans_b](Node<T>& node) {
    auto& an = *node.parents[0];
    auto& bn = *node.parents[1];
    const T* g = node.grad.data();
    for (int64_t bi = 0; bi < batch; ++bi) {
      detail::CMatMap<T> G(g + bi * m * nn, m, nn);
      detail::CMatMap<T> A(an.value.data() + bi * m * k, m, k);
      if (trans_b) {
        detail::CMatMap<T> B(bn.value.data() + bi * nn * k, nn, k);
        if (an.requires_grad) {
          an.ensure_grad();
          detail::MatMap<T> dA(an.grad.data() + bi * m * k, m, k);
          dA.noalias() += G * B;
        }
        if (bn.requires_grad) {
          bn.ensure_grad();
          detail::MatMap<T> dB(bn.grad.data() + bi * nn * k, nn, k);
          dB.noalias() += G.transpose() * A;
        }
      } else {
        detail::CMatMap<T> B(bn.value.data() + bi * k * nn, k, nn);
        if (an.requires_grad) {
          an.ensure_grad();
          detail::MatMap<T> dA(an.grad.data() + bi * m * k, m, k);
          dA.noalias() += G * B.transpose();
        }
        if (bn.requires_grad) {
          bn.ensure_grad();
          detail::MatMap<T> dB(bn.grad.data() + bi * k * nn, k, nn);
          dB.noalias() += A.transpose() * G;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions over one axis.

enum class ReduceKind { Sum, Mean, Max };

template <typename T>
Tensor<T> reduce(const Tensor<T>& a, ReduceKind kind, int64_t axis, bool keepdim = false) {
  const Shape& s = a.shape();
  check(axis >= 0 && axis < static_cast<int64_t>(s.size()), "reduce axis out of range");
  int64_t an = s[axis];
  if (an == 0) throw DomainError("reduce over empty axis");
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];

  Shape out_shape;
  for (size_t i = 0; i < s.size(); ++i) {
    if (static_cast<int64_t>(i) == axis) {
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(s[i]);
    }
  }
  if (out_shape.empty()) out_shape = {1};

  std::vector<T> out(static_cast<size_t>(outer * inner));
  std::vector<int64_t> argmax;
  if (kind == ReduceKind::Max) argmax.resize(static_cast<size_t>(outer * inner));
  const T* p = a.data().data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const T* base = p + o * an * inner + in;
      if (kind == ReduceKind::Max) {
        T best = base[0];
        int64_t bi = 0;
        for (int64_t j = 1; j < an; ++j) {
          T v = base[j * inner];
          if (v > best) { best = v; bi = j; }  // strict >: first argmax wins ties
        }
        out[o * inner + in] = best;
        argmax[o * inner + in] = bi;
      } else {
        T acc = T(0);
        for (int64_t j = 0; j < an; ++j) acc += base[j * inner];
        out[o * inner + in] = (kind == ReduceKind::Mean) ? acc / T(an) : acc;
      }
    }
  }

  return make_op<T>(out_shape, std::move(out), {a},
                    [kind, outer, an, inner, argmax](Node<T>& node) {
    auto& parent = *node.parents[0];
    parent.ensure_grad();
    const T* g = node.grad.data();
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        T gv = g[o * inner + in];
        T* base = parent.grad.data() + o * an * inner + in;
        switch (kind) {
          case ReduceKind::Sum:
            for (int64_t j = 0; j < an; ++j) base[j * inner] += gv;
            break;
          case ReduceKind::Mean:
            for (int64_t j = 0; j < an; ++j) base[j * inner] += gv / T(an);
            break;
          case ReduceKind::Max:
            base[argmax[o * inner + in] * inner] += gv;
            break;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.data()) acc += v;
  return make_op<T>({1}, {acc}, {a}, [](Node<T>& node) {
    auto& parent = *node.parents[0];
    parent.ensure_grad();
    T g = node.grad[0];
    for (auto& gv : parent.grad) gv += g;
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return scale(sum_all(a), T(1) / T(a.size()));
}

// ---------------------------------------------------------------------------
// Softmax over the last dimension (numerically stable).

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& a) {
  const Shape& s = a.shape();
  int64_t cols = s.back();
  int64_t rows = a.size() / cols;
  std::vector<T> out(static_cast<size_t>(a.size()));
  const T* p = a.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = p + r * cols;
    T mx = row[0];
    for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T sum = T(0);
    for (int64_t c = 0; c < cols; ++c) {
      T e = std::exp(row[c] - mx);
      out[r * cols + c] = e;
      sum += e;
    }
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] /= sum;
  }
  return make_op<T>(s, std::move(out), {a}, [rows, cols](Node<T>& node) {
    auto& parent = *node.parents[0];
    parent.ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = node.value.data() + r * cols;
      const T* g = node.grad.data() + r * cols;
      T dot = T(0);
      for (int64_t c = 0; c < cols; ++c) dot += y[c] * g[c];
      T* dx = parent.grad.data() + r * cols;
      for (int64_t c = 0; c < cols; ++c) dx[c] += y[c] * (g[c] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation.

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
  check(numel(new_shape) == a.size(),
        "reshape " + shape_str(a.shape()) + " -> " + shape_str(new_shape) + " changes element count");
  std::vector<T> out = a.data();
  return make_op<T>(std::move(new_shape), std::move(out), {a}, [](Node<T>& node) {
    auto& parent = *node.parents[0];
    parent.ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) parent.grad[i] += node.grad[i];
  });
}

namespace detail {
template <typename T>
void permute_raw(const T* in, const Shape& in_shape, const std::vector<int64_t>& perm,
                 T* out, bool accumulate) {
  size_t r = in_shape.size();
  Shape out_shape(r);
  for (size_t i = 0; i < r; ++i) out_shape[i] = in_shape[perm[i]];
  auto in_str = row_strides(in_shape);
  std::vector<int64_t> src_str(r);
  for (size_t i = 0; i < r; ++i) src_str[i] = in_str[perm[i]];
  std::vector<int64_t> coord(r, 0);
  int64_t n = numel(in_shape);
  int64_t src = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (accumulate) out[src] += in[i];  // used transposed in backward
    else out[i] = in[src];
    for (size_t d = r; d-- > 0;) {
      ++coord[d];
      src += src_str[d];
      if (coord[d] < out_shape[d]) break;
      src -= src_str[d] * out_shape[d];
      coord[d] = 0;
    }
  }
}
}  // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& a, std::vector<int64_t> perm) {
  const Shape& s = a.shape();
  check(perm.size() == s.size(), "permute rank mismatch");
  Shape out_shape(s.size());
  for (size_t i = 0; i < s.size(); ++i) out_shape[i] = s[perm[i]];
  std::vector<T> out(static_cast<size_t>(a.size()));
  detail::permute_raw(a.data().data(), s, perm, out.data(), false);
  return make_op<T>(out_shape, std::move(out), {a}, [perm, out_shape](Node<T>& node) {
    auto& parent = *node.parents[0];
    parent.ensure_grad();
    // grad flows back through the same index map, accumulated at the source.
    size_t r = perm.size();
    auto in_str = row_strides(parent.shape);
    std::vector<int64_t> src_str(r);
    for (size_t i = 0; i < r; ++i) src_str[i] = in_str[perm[i]];
    std::vector<int64_t> coord(r, 0);
    int64_t n = static_cast<int64_t>(node.grad.size());
    int64_t src = 0;
    for (int64_t i = 0; i < n; ++i) {
      parent.grad[src] += node.grad[i];
      for (size_t d = r; d-- > 0;) {
        ++coord[d];
        src += src_str[d];
        if (coord[d] < out_shape[d]) break;
        src -= src_str[d] * out_shape[d];
        coord[d] = 0;
      }
    }
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int64_t axis) {
  check(!parts.empty(), "concat of nothing");
  const Shape& s0 = parts[0].shape();
  Shape out_shape = s0;
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    check(s.size() == s0.size(), "concat rank mismatch");
    for (size_t i = 0; i < s.size(); ++i)
      if (static_cast<int64_t>(i) != axis)
        check(s[i] == s0[i], "concat extent mismatch off-axis");
    axis_total += s[axis];
  }
  out_shape[axis] = axis_total;

  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= s0[i];
  for (size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

  std::vector<T> out(static_cast<size_t>(numel(out_shape)));
  std::vector<int64_t> extents;
  int64_t off = 0;
  for (const auto& p : parts) {
    int64_t e = p.dim(axis);
    extents.push_back(e);
    const T* src = p.data().data();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + (o * axis_total + off) * inner,
                  src + o * e * inner, sizeof(T) * static_cast<size_t>(e * inner));
    off += e;
  }

  auto node = std::make_shared<Node<T>>();
  node->shape = out_shape;
  node->value = std::move(out);
  for (const auto& p : parts) {
    node->parents.push_back(p.node());
    node->requires_grad = node->requires_grad || p.requires_grad();
  }
  if (node->requires_grad) {
    node->backprop = [outer, inner, axis_total, extents](Node<T>& nd) {
      int64_t off2 = 0;
      for (size_t pi = 0; pi < nd.parents.size(); ++pi) {
        auto& parent = *nd.parents[pi];
        int64_t e = extents[pi];
        if (parent.requires_grad) {
          parent.ensure_grad();
          for (int64_t o = 0; o < outer; ++o) {
            const T* g = nd.grad.data() + (o * axis_total + off2) * inner;
            T* dst = parent.grad.data() + o * e * inner;
            for (int64_t j = 0; j < e * inner; ++j) dst[j] += g[j];
          }
        }
        off2 += e;
      }
    };
  }
  node->seq = next_node_seq();
  return Tensor<T>(node);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, int64_t axis, int64_t start, int64_t len) {
  const Shape& s = a.shape();
  check(axis >= 0 && axis < static_cast<int64_t>(s.size()), "slice axis out of range");
  check(start >= 0 && len >= 1 && start + len <= s[axis], "slice bounds out of range");
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<T> out(static_cast<size_t>(outer * len * inner));
  const T* p = a.data().data();
  int64_t an = s[axis];
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * len * inner, p + (o * an + start) * inner,
                sizeof(T) * static_cast<size_t>(len * inner));
  return make_op<T>(out_shape, std::move(out), {a},
                    [outer, inner, an, start, len](Node<T>& node) {
    auto& parent = *node.parents[0];
    parent.ensure_grad();
    for (int64_t o = 0; o < outer; ++o) {
      const T* g = node.grad.data() + o * len * inner;
      T* dst = parent.grad.data() + (o * an + start) * inner;
      for (int64_t j = 0; j < len * inner; ++j) dst[j] += g[j];
    }
  });
}

// Zero padding on the bottom/right of an NHWC map.
template <typename T>
Tensor<T> pad_nhwc(const Tensor<T>& a, int64_t pad_h, int64_t pad_w) {
  const Shape& s = a.shape();
  check(s.size() == 4, "pad_nhwc expects NHWC");
  if (pad_h == 0 && pad_w == 0) return reshape(a, s);
  int64_t N = s[0], H = s[1], W = s[2], C = s[3];
  int64_t Ho = H + pad_h, Wo = W + pad_w;
  std::vector<T> out(static_cast<size_t>(N * Ho * Wo * C), T(0));
  const T* p = a.data().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t h = 0; h < H; ++h)
      std::memcpy(out.data() + ((n * Ho + h) * Wo) * C, p + ((n * H + h) * W) * C,
                  sizeof(T) * static_cast<size_t>(W * C));
  return make_op<T>({N, Ho, Wo, C}, std::move(out), {a},
                    [N, H, W, C, Ho, Wo](Node<T>& node) {
    auto& parent = *node.parents[0];
    parent.ensure_grad();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t h = 0; h < H; ++h) {
        const T* g = node.grad.data() + ((n * Ho + h) * Wo) * C;
        T* dst = parent.grad.data() + ((n * H + h) * W) * C;
        for (int64_t j = 0; j < W * C; ++j) dst[j] += g[j];
      }
  });
}

template <typename T>
Tensor<T> crop_nhwc(const Tensor<T>& a, int64_t H, int64_t W) {
  const Shape& s = a.shape();
  check(s.size() == 4 && s[1] >= H && s[2] >= W, "crop_nhwc bounds");
  if (s[1] == H && s[2] == W) return reshape(a, s);
  Tensor<T> t = slice(a, 1, 0, H);
  return slice(t, 2, 0, W);
}

// Torus roll on the H and W axes of an NHWC map: out[h][w] = in[(h+sh) mod H][(w+sw) mod W].
template <typename T>
Tensor<T> roll_nhwc(const Tensor<T>& a, int64_t sh, int64_t sw) {
  const Shape& s = a.shape();
  check(s.size() == 4, "roll_nhwc expects NHWC");
  int64_t N = s[0], H = s[1], W = s[2], C = s[3];
  auto wrap = [](int64_t v, int64_t m) { return ((v % m) + m) % m; };
  std::vector<T> out(static_cast<size_t>(a.size()));
  const T* p = a.data().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t h = 0; h < H; ++h) {
      int64_t hs = wrap(h + sh, H);
      for (int64_t w = 0; w < W; ++w) {
        int64_t ws = wrap(w + sw, W);
        std::memcpy(out.data() + (((n * H + h) * W) + w) * C,
                    p + (((n * H + hs) * W) + ws) * C, sizeof(T) * static_cast<size_t>(C));
      }
    }
  return make_op<T>(s, std::move(out), {a}, [N, H, W, C, sh, sw](Node<T>& node) {
    auto& parent = *node.parents[0];
    parent.ensure_grad();
    auto wrap2 = [](int64_t v, int64_t m) { return ((v % m) + m) % m; };
    for (int64_t n = 0; n < N; ++n)
      for (int64_t h = 0; h < H; ++h) {
        int64_t hs = wrap2(h + sh, H);
        for (int64_t w = 0; w < W; ++w) {
          int64_t ws = wrap2(w + sw, W);
          const T* g = node.grad.data() + (((n * H + h) * W) + w) * C;
          T* dst = parent.grad.data() + (((n * H + hs) * W) + ws) * C;
          for (int64_t c = 0; c < C; ++c) dst[c] += g[c];
        }
      }
  });
}

// Row gather: out[i, :] = table[idx[i], :]. Backward scatter-adds.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<int64_t>& idx) {
  const Shape& s = table.shape();
  check(s.size() == 2, "gather_rows expects a 2-d table");
  int64_t K = s[0], Hd = s[1];
  std::vector<T> out(idx.size() * static_cast<size_t>(Hd));
  const T* p = table.data().data();
  for (size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < K, "gather_rows index out of range");
    std::memcpy(out.data() + i * Hd, p + idx[i] * Hd, sizeof(T) * static_cast<size_t>(Hd));
  }
  return make_op<T>({static_cast<int64_t>(idx.size()), Hd}, std::move(out), {table},
                    [idx, Hd](Node<T>& node) {
    auto& parent = *node.parents[0];
    parent.ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i) {
      const T* g = node.grad.data() + i * Hd;
      T* dst = parent.grad.data() + idx[i] * Hd;
      for (int64_t j = 0; j < Hd; ++j) dst[j] += g[j];
    }
  });
}

}  // namespace coswin
