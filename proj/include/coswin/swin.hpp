#pragma once

#include <vector>

#include "coswin/layers.hpp"

namespace coswin {

constexpr double kMaskLarge = 100.0;  // exp(-100) underflows cleanly in f32 softmax

struct WindowAttentionConfig {
  int64_t window = 4;
  int64_t heads = 2;
  int64_t embed = 32;
  bool qkv_bias = true;
};

// [N,H,W,C] -> [(N*H/M*W/M), M*M, C], non-overlapping windows in raster order.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, int64_t M) {
  const Shape& s = x.shape();
  check(s.size() == 4, "window_partition expects NHWC");
  int64_t N = s[0], H = s[1], W = s[2], C = s[3];
  check(H % M == 0 && W % M == 0,
        "window_partition: H,W " + shape_str({H, W}) + " not divisible by M=" + std::to_string(M));
  Tensor<T> t = reshape(x, {N, H / M, M, W / M, M, C});
  t = permute(t, {0, 1, 3, 2, 4, 5});
  return reshape(t, {N * (H / M) * (W / M), M * M, C});
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& wins, int64_t M, int64_t N, int64_t H, int64_t W) {
  const Shape& s = wins.shape();
  check(s.size() == 3 && s[1] == M * M, "window_reverse token count");
  check(s[0] == N * (H / M) * (W / M), "window_reverse window count");
  int64_t C = s[2];
  Tensor<T> t = reshape(wins, {N, H / M, W / M, M, M, C});
  t = permute(t, {0, 1, 3, 2, 4, 5});
  return reshape(t, {N, H, W, C});
}

// Roll by (-s,-s): output (h,w) holds input ((h+s) mod H, (w+s) mod W).
template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, int64_t s) {
  return roll_nhwc(x, s, s);
}

template <typename T>
Tensor<T> inverse_shift(const Tensor<T>& x, int64_t s) {
  return roll_nhwc(x, -s, -s);
}

// Pre-shift region label of source coordinate (h,w): 3x3 partition at cuts
// {0, H-M, H-s} x {0, W-M, W-s}.
inline int region_label(int64_t h, int64_t w, int64_t H, int64_t W, int64_t M, int64_t s) {
  auto band = [&](int64_t v, int64_t n) {
    if (v < n - M) return 0;
    if (v < n - s) return 1;
    return 2;
  };
  return 3 * band(h, H) + band(w, W);
}

// Additive mask [num_windows, M*M, M*M]: 0 within a pre-shift region,
// -kMaskLarge across regions. All zeros when s == 0.
template <typename T>
Tensor<T> build_shift_mask(int64_t H, int64_t W, int64_t M, int64_t s) {
  check(H % M == 0 && W % M == 0, "build_shift_mask: extents not divisible by M");
  int64_t nH = H / M, nW = W / M;
  int64_t nwin = nH * nW;
  int64_t L = M * M;
  std::vector<T> mask(static_cast<size_t>(nwin * L * L), T(0));
  if (s > 0) {
    // Label of each shifted position = region of its pre-shift source.
    std::vector<int> labels(static_cast<size_t>(H * W));
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w)
        labels[h * W + w] = region_label((h + s) % H, (w + s) % W, H, W, M, s);
    for (int64_t wh = 0; wh < nH; ++wh)
      for (int64_t ww = 0; ww < nW; ++ww) {
        int64_t win = wh * nW + ww;
        for (int64_t i = 0; i < L; ++i) {
          int li = labels[(wh * M + i / M) * W + ww * M + i % M];
          for (int64_t j = 0; j < L; ++j) {
            int lj = labels[(wh * M + j / M) * W + ww * M + j % M];
            if (li != lj) mask[(win * L + i) * L + j] = static_cast<T>(-kMaskLarge);
          }
        }
      }
  }
  return Tensor<T>::from({nwin, L, L}, std::move(mask));
}

// Windowed multi-head self-attention with learnable relative position bias.
template <typename T>
class WindowAttention {
 public:
  WindowAttention() = default;
  WindowAttention(ParamRegistry<T>& reg, const std::string& prefix,
                  const WindowAttentionConfig& cfg)
      : cfg_(cfg) {
    check(cfg.embed % cfg.heads == 0, "embed dim must be divisible by head count");
    qkv_ = Linear<T>(reg, prefix + ".qkv", cfg.embed, 3 * cfg.embed, cfg.qkv_bias);
    proj_ = Linear<T>(reg, prefix + ".proj", cfg.embed, cfg.embed);
    int64_t span = 2 * cfg.window - 1;
    {
      Rng rng = reg.rng_for(prefix + ".rel_bias");
      std::vector<T> init(static_cast<size_t>(span * span * cfg.heads));
      for (auto& v : init) v = static_cast<T>(rng.normal(0.0, 0.02));
      rel_bias_ = reg.add_param(prefix + ".rel_bias",
                                Tensor<T>::from({span * span, cfg.heads}, std::move(init)),
                                /*decay=*/false);
    }
    // Fixed index map: token pair (i,j) -> relative coordinate bucket.
    int64_t M = cfg.window, L = M * M;
    rel_index_.resize(static_cast<size_t>(L * L));
    for (int64_t i = 0; i < L; ++i)
      for (int64_t j = 0; j < L; ++j) {
        int64_t dy = i / M - j / M + M - 1;
        int64_t dx = i % M - j % M + M - 1;
        rel_index_[i * L + j] = dy * span + dx;
      }
  }

  // tokens: [B_w, M*M, C]; mask: [nW, L, L] additive bias shared across the
  // batch (window index = b mod nW), or undefined for no masking.
  Tensor<T> forward(const Tensor<T>& tokens, const Tensor<T>& mask,
                    bool use_rel_bias = true) const {
    const Shape& s = tokens.shape();
    int64_t Bw = s[0], L = s[1], C = s[2];
    int64_t M = cfg_.window, heads = cfg_.heads, d = C / heads;
    check(L == M * M, "window_attention token count must be M*M");
    check(C == cfg_.embed, "window_attention channel mismatch");

    Tensor<T> qkv = qkv_.forward(tokens);                       // [Bw, L, 3C]
    qkv = reshape(qkv, {Bw, L, 3, heads, d});
    qkv = permute(qkv, {2, 0, 3, 1, 4});                        // [3, Bw, heads, L, d]
    Tensor<T> q = reshape(slice(qkv, 0, 0, 1), {Bw * heads, L, d});
    Tensor<T> k = reshape(slice(qkv, 0, 1, 1), {Bw * heads, L, d});
    Tensor<T> v = reshape(slice(qkv, 0, 2, 1), {Bw * heads, L, d});

    Tensor<T> attn = scale(matmul(q, k, /*trans_b=*/true),
                           static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
    attn = reshape(attn, {Bw, heads, L, L});

    if (use_rel_bias) {
      Tensor<T> bias = gather_rows(rel_bias_, rel_index_);      // [L*L, heads]
      bias = permute(reshape(bias, {L, L, heads}), {2, 0, 1});  // [heads, L, L]
      attn = add(attn, reshape(bias, {1, heads, L, L}));
    }
    if (mask.defined()) {
      int64_t nwin = mask.dim(0);
      check(Bw % nwin == 0, "mask window count does not divide batch");
      int64_t rep = Bw / nwin;
      std::vector<T> tiled(static_cast<size_t>(Bw * L * L));
      for (int64_t r = 0; r < rep; ++r)
        std::copy(mask.data().begin(), mask.data().end(),
                  tiled.begin() + r * nwin * L * L);
      Tensor<T> m = Tensor<T>::from({Bw, 1, L, L}, std::move(tiled));
      attn = add(attn, m);
    }

    attn = softmax_lastdim(attn);
    Tensor<T> out = matmul(reshape(attn, {Bw * heads, L, L}), v);  // [Bw*heads, L, d]
    out = permute(reshape(out, {Bw, heads, L, d}), {0, 2, 1, 3});
    out = reshape(out, {Bw, L, C});
    return proj_.forward(out);
  }

  // Exposed for attention-row inspection in tests.
  Tensor<T> attention_probs(const Tensor<T>& tokens, const Tensor<T>& mask) const {
    const Shape& s = tokens.shape();
    int64_t Bw = s[0], L = s[1], C = s[2];
    int64_t heads = cfg_.heads, d = C / heads;
    Tensor<T> qkv = qkv_.forward(tokens);
    qkv = permute(reshape(qkv, {Bw, L, 3, heads, d}), {2, 0, 3, 1, 4});
    Tensor<T> q = reshape(slice(qkv, 0, 0, 1), {Bw * heads, L, d});
    Tensor<T> k = reshape(slice(qkv, 0, 1, 1), {Bw * heads, L, d});
    Tensor<T> attn = scale(matmul(q, k, true),
                           static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
    attn = reshape(attn, {Bw, heads, L, L});
    Tensor<T> bias = gather_rows(rel_bias_, rel_index_);
    attn = add(attn, reshape(permute(reshape(bias, {L, L, heads}), {2, 0, 1}), {1, heads, L, L}));
    if (mask.defined()) {
      int64_t nwin = mask.dim(0);
      int64_t rep = Bw / nwin;
      std::vector<T> tiled(static_cast<size_t>(Bw * L * L));
      for (int64_t r = 0; r < rep; ++r)
        std::copy(mask.data().begin(), mask.data().end(), tiled.begin() + r * nwin * L * L);
      attn = add(attn, Tensor<T>::from({Bw, 1, L, L}, std::move(tiled)));
    }
    return softmax_lastdim(attn);
  }

  Linear<T> qkv_, proj_;
  Tensor<T> rel_bias_;
  std::vector<int64_t> rel_index_;

 private:
  WindowAttentionConfig cfg_;
};

// One LN -> (S)W-MSA -> residual -> LN -> MLP -> residual sub-block.
template <typename T>
class SwinSubBlock {
 public:
  SwinSubBlock() = default;
  SwinSubBlock(ParamRegistry<T>& reg, const std::string& prefix,
               const WindowAttentionConfig& cfg, int64_t shift, int64_t mlp_ratio = 4)
      : cfg_(cfg), shift_(shift) {
    ln1_ = LayerNorm<T>(reg, prefix + ".ln1", cfg.embed);
    attn_ = WindowAttention<T>(reg, prefix + ".attn", cfg);
    ln2_ = LayerNorm<T>(reg, prefix + ".ln2", cfg.embed);
    fc1_ = Linear<T>(reg, prefix + ".mlp.fc1", cfg.embed, mlp_ratio * cfg.embed);
    fc2_ = Linear<T>(reg, prefix + ".mlp.fc2", mlp_ratio * cfg.embed, cfg.embed);
  }

  // x: [N,H,W,C] -> same shape. Pads to window multiples internally.
  Tensor<T> forward(const Tensor<T>& x) const {
    const Shape& s = x.shape();
    int64_t N = s[0], H = s[1], W = s[2], C = s[3];
    int64_t M = cfg_.window;
    int64_t Hp = (H + M - 1) / M * M;
    int64_t Wp = (W + M - 1) / M * M;

    Tensor<T> h = ln1_.forward(x);
    h = pad_nhwc(h, Hp - H, Wp - W);
    Tensor<T> mask;  // undefined for shift 0
    if (shift_ > 0) {
      h = cyclic_shift(h, shift_);
      mask = build_shift_mask<T>(Hp, Wp, M, shift_);
    }
    Tensor<T> wins = window_partition(h, M);
    wins = attn_.forward(wins, mask);
    h = window_reverse(wins, M, N, Hp, Wp);
    if (shift_ > 0) h = inverse_shift(h, shift_);
    h = crop_nhwc(h, H, W);
    Tensor<T> y = add(x, h);

    Tensor<T> m = ln2_.forward(y);
    m = fc2_.forward(gelu(fc1_.forward(m)));
    return add(y, m);
  }

  LayerNorm<T> ln1_, ln2_;
  WindowAttention<T> attn_;
  Linear<T> fc1_, fc2_;

 private:
  WindowAttentionConfig cfg_;
  int64_t shift_ = 0;
};

// The canonical W-MSA / SW-MSA pair.
template <typename T>
class SwinBlock {
 public:
  SwinBlock() = default;
  SwinBlock(ParamRegistry<T>& reg, const std::string& prefix, const WindowAttentionConfig& cfg)
      : a_(reg, prefix + ".a", cfg, 0), b_(reg, prefix + ".b", cfg, cfg.window / 2) {}

  // x: [N,C,H,W] -> [N,C,H,W]
  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> h = permute(x, {0, 2, 3, 1});  // to NHWC
    h = a_.forward(h);
    h = b_.forward(h);
    return permute(h, {0, 3, 1, 2});
  }

  SwinSubBlock<T> a_, b_;
};

}  // namespace coswin
