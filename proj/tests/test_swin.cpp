#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "coswin/swin.hpp"

using namespace coswin;

namespace {

Tensor<double> rand_tensor(Shape s, uint64_t seed, uint64_t stream, double lo = -1.0,
                           double hi = 1.0) {
  Rng rng(seed, stream);
  std::vector<double> d(static_cast<size_t>(numel(s)));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return Tensor<double>::from(std::move(s), std::move(d));
}

// Independent region-label oracle: a pixel's pre-shift region is determined by
// which side of the cuts {0, H-M, H-s} x {0, W-M, W-s} its SOURCE coordinate
// falls on, where the source of shifted position (h, w) is ((h+s)%H, (w+s)%W).
int oracle_label(int64_t h, int64_t w, int64_t H, int64_t W, int64_t M, int64_t s) {
  int64_t sh = (h + s) % H, sw = (w + s) % W;
  int rh = sh >= H - s ? 2 : (sh >= H - M ? 1 : 0);
  int rw = sw >= W - s ? 2 : (sw >= W - M ? 1 : 0);
  return rh * 3 + rw;
}

}  // namespace

TEST_CASE("window partition: 4x4 with M=2 yields 4 windows of 4 tokens in raster order") {
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[i] = i;
  auto x = Tensor<double>::from({1, 4, 4, 1}, v);
  auto wins = window_partition(x, 2);
  CHECK(wins.shape() == Shape{4, 4, 1});
  // [TRIVIAL] window w covers rows 2*(w/2).. and cols 2*(w%2).. of the map.
  CHECK(wins.data() == std::vector<double>{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15});
}

TEST_CASE("window partition/reverse: exact inverse for every H,W <= 8 and M in {2,4}") {
  for (int64_t M : {2, 4})
    for (int64_t H = M; H <= 8; H += M)
      for (int64_t W = M; W <= 8; W += M) {
        auto x = rand_tensor({2, H, W, 3}, 11, static_cast<uint64_t>(H * 100 + W * 10 + M));
        auto wins = window_partition(x, M);
        CHECK(wins.dim(0) == 2 * (H / M) * (W / M));
        auto back = window_reverse(wins, M, 2, H, W);
        CHECK(back.data() == x.data());  // bit-exact
      }
}

TEST_CASE("window partition: M = H = W gives a single window in row-major order") {
  auto x = rand_tensor({1, 4, 4, 2}, 3, 9);
  auto wins = window_partition(x, 4);
  CHECK(wins.shape() == Shape{1, 16, 2});
  CHECK(wins.data() == x.data());
}

TEST_CASE("cyclic shift: s=0 identity, position (0,0) takes old (1,1), exact inverse") {
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[i] = i * 10.0;
  auto x = Tensor<double>::from({1, 4, 4, 1}, v);
  CHECK(cyclic_shift(x, 0).data() == x.data());

  auto y = cyclic_shift(x, 1);
  // [DERIVED] output (h,w) holds input ((h+1)%4, (w+1)%4), so (0,0) <- old (1,1).
  CHECK(y.data()[0] == v[1 * 4 + 1]);
  CHECK(y.data()[3] == v[1 * 4 + 0]);   // (0,3) <- (1,0) wraps
  CHECK(y.data()[12] == v[0 * 4 + 1]);  // (3,0) <- (0,1) wraps

  for (int64_t s = 0; s < 4; ++s) {
    auto r = rand_tensor({2, 4, 4, 3}, 5, static_cast<uint64_t>(s));
    CHECK(inverse_shift(cyclic_shift(r, s), s).data() == r.data());
  }
}

TEST_CASE("window attention: every post-softmax row sums to 1 within 1e-6") {
  ParamRegistry<double> reg(17);
  WindowAttentionConfig cfg;
  cfg.window = 4;
  cfg.heads = 2;
  cfg.embed = 8;
  WindowAttention<double> attn(reg, "wa", cfg);
  auto tokens = rand_tensor({3, 16, 8}, 21, 1);
  Tensor<double> none;
  auto probs = attn.attention_probs(tokens, none);  // [3, 2, 16, 16]
  CHECK(probs.shape() == Shape{3, 2, 16, 16});
  for (int64_t r = 0; r < 3 * 2 * 16; ++r) {
    double sum = 0;
    for (int64_t j = 0; j < 16; ++j) sum += probs.data()[r * 16 + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("window attention: masked token pairs get weight below 1e-8") {
  ParamRegistry<double> reg(18);
  WindowAttentionConfig cfg;
  cfg.window = 4;
  cfg.heads = 2;
  cfg.embed = 8;
  WindowAttention<double> attn(reg, "wa", cfg);
  auto mask = build_shift_mask<double>(8, 8, 4, 2);  // 4 windows
  auto tokens = rand_tensor({4, 16, 8}, 22, 2);
  auto probs = attn.attention_probs(tokens, mask);  // [4, 2, 16, 16]
  int masked_pairs = 0;
  for (int64_t b = 0; b < 4; ++b)
    for (int64_t h = 0; h < 2; ++h)
      for (int64_t i = 0; i < 16; ++i)
        for (int64_t j = 0; j < 16; ++j)
          if (mask.data()[(b * 16 + i) * 16 + j] != 0.0) {
            ++masked_pairs;
            CHECK(probs.data()[((b * 2 + h) * 16 + i) * 16 + j] < 1e-8);
          }
  CHECK(masked_pairs > 0);  // the shifted 8x8 map must actually mask something
}

TEST_CASE("window attention: single token window has attention weight exactly 1") {
  ParamRegistry<double> reg(19);
  WindowAttentionConfig cfg;
  cfg.window = 1;
  cfg.heads = 1;
  cfg.embed = 4;
  WindowAttention<double> attn(reg, "wa", cfg);
  auto tokens = rand_tensor({2, 1, 4}, 23, 3);
  Tensor<double> none;
  auto probs = attn.attention_probs(tokens, none);
  for (double p : probs.data()) CHECK(p == 1.0);
}

TEST_CASE("shift mask: s=0 gives an all-zero mask") {
  auto mask = build_shift_mask<double>(8, 8, 4, 0);
  for (double v : mask.data()) CHECK(v == 0.0);
}

TEST_CASE("shift mask: exhaustive region-label oracle for every H,W <= 8") {
  for (int64_t M : {2, 4}) {
    int64_t s = M / 2;
    for (int64_t H = M; H <= 8; H += M)
      for (int64_t W = M; W <= 8; W += M) {
        auto mask = build_shift_mask<double>(H, W, M, s);
        int64_t nW = W / M, L = M * M;
        for (int64_t wh = 0; wh < H / M; ++wh)
          for (int64_t ww = 0; ww < nW; ++ww) {
            int64_t win = wh * nW + ww;
            for (int64_t i = 0; i < L; ++i)
              for (int64_t j = 0; j < L; ++j) {
                int li = oracle_label(wh * M + i / M, ww * M + i % M, H, W, M, s);
                int lj = oracle_label(wh * M + j / M, ww * M + j % M, H, W, M, s);
                double expect = (li != lj) ? -kMaskLarge : 0.0;
                CHECK(mask.data()[(win * L + i) * L + j] == expect);
              }
          }
      }
  }
}

TEST_CASE("shift mask: H=W=4, M=2, s=1 bottom-right window mixes four regions") {
  auto mask = build_shift_mask<double>(4, 4, 2, 1);
  CHECK(mask.shape() == Shape{4, 4, 4});
  // [DERIVED] The bottom-right window's four tokens come from pre-shift
  // sources (3,3), (3,0), (0,3), (0,0): four distinct regions, so every
  // off-diagonal pair is masked -> 12 of 16 entries are -LARGE.
  int cnt = 0;
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 4; ++j)
      if (mask.data()[(3 * 4 + i) * 4 + j] == -kMaskLarge) ++cnt;
  CHECK(cnt == 12);
  // Cross-check against the oracle for all four windows.
  for (int64_t win = 0; win < 4; ++win) {
    int64_t wh = win / 2, ww = win % 2;
    for (int64_t i = 0; i < 4; ++i)
      for (int64_t j = 0; j < 4; ++j) {
        int li = oracle_label(wh * 2 + i / 2, ww * 2 + i % 2, 4, 4, 2, 1);
        int lj = oracle_label(wh * 2 + j / 2, ww * 2 + j % 2, 4, 4, 2, 1);
        CHECK(mask.data()[(win * 4 + i) * 4 + j] == (li != lj ? -kMaskLarge : 0.0));
      }
  }
}

TEST_CASE("masked attention equals per-region attention renormalized on a 4x4 map") {
  // Single 4x4 window, shift 2: the mask must make each token attend only
  // within its own pre-shift region, i.e. masked probs equal the unmasked
  // probs renormalized over the same-region subset.
  ParamRegistry<double> reg(20);
  WindowAttentionConfig cfg;
  cfg.window = 4;
  cfg.heads = 2;
  cfg.embed = 8;
  WindowAttention<double> attn(reg, "wa", cfg);

  auto x = rand_tensor({1, 4, 4, 8}, 31, 7);
  auto shifted = cyclic_shift(x, 2);
  auto tokens = window_partition(shifted, 4);  // [1, 16, 8]
  auto mask = build_shift_mask<double>(4, 4, 4, 2);
  Tensor<double> none;
  auto full = attn.attention_probs(tokens, none);    // [1, 2, 16, 16]
  auto masked = attn.attention_probs(tokens, mask);  // [1, 2, 16, 16]

  std::vector<int> label(16);
  for (int64_t p = 0; p < 16; ++p) label[p] = oracle_label(p / 4, p % 4, 4, 4, 4, 2);

  for (int64_t h = 0; h < 2; ++h)
    for (int64_t i = 0; i < 16; ++i) {
      double denom = 0.0;
      for (int64_t j = 0; j < 16; ++j)
        if (label[j] == label[i]) denom += full.data()[(h * 16 + i) * 16 + j];
      for (int64_t j = 0; j < 16; ++j) {
        double got = masked.data()[(h * 16 + i) * 16 + j];
        if (label[j] == label[i])
          CHECK(got == doctest::Approx(full.data()[(h * 16 + i) * 16 + j] / denom).epsilon(1e-10));
        else
          CHECK(got < 1e-30);
      }
    }
}

TEST_CASE("window attention: permutation equivariance with relative bias disabled") {
  ParamRegistry<double> reg(25);
  WindowAttentionConfig cfg;
  cfg.window = 2;
  cfg.heads = 2;
  cfg.embed = 6;
  WindowAttention<double> attn(reg, "wa", cfg);
  auto tokens = rand_tensor({1, 4, 6}, 41, 9);
  Tensor<double> none;
  auto y = attn.forward(tokens, none, /*use_rel_bias=*/false);

  std::vector<int64_t> perm{2, 0, 3, 1};
  std::vector<double> pd(4 * 6);
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t c = 0; c < 6; ++c) pd[i * 6 + c] = tokens.data()[perm[i] * 6 + c];
  auto ptok = Tensor<double>::from({1, 4, 6}, std::move(pd));
  auto py = attn.forward(ptok, none, /*use_rel_bias=*/false);

  for (int64_t i = 0; i < 4; ++i)
    for (int64_t c = 0; c < 6; ++c)
      CHECK(py.data()[i * 6 + c] ==
            doctest::Approx(y.data()[perm[i] * 6 + c]).epsilon(1e-12));
}

TEST_CASE("swin sub-block: zeroed proj and fc2 reduce it to the identity") {
  ParamRegistry<double> reg(26);
  WindowAttentionConfig cfg;
  cfg.window = 2;
  cfg.heads = 2;
  cfg.embed = 4;
  SwinSubBlock<double> blk(reg, "blk", cfg, /*shift=*/1);
  auto zero_out = [](Tensor<double>& t) { std::fill(t.data().begin(), t.data().end(), 0.0); };
  zero_out(blk.attn_.proj_.weight_);
  zero_out(blk.attn_.proj_.bias_);
  zero_out(blk.fc2_.weight_);
  zero_out(blk.fc2_.bias_);
  auto x = rand_tensor({2, 4, 4, 4}, 51, 13);
  auto y = blk.forward(x);
  CHECK(y.data() == x.data());  // both residual branches contribute exactly zero
}

TEST_CASE("swin block: output shape equals input shape, including padded sizes") {
  ParamRegistry<double> reg(27);
  WindowAttentionConfig cfg;
  cfg.window = 4;
  cfg.heads = 2;
  cfg.embed = 8;
  SwinBlock<double> blk(reg, "swin", cfg);
  for (Shape s : {Shape{2, 8, 8, 8}, Shape{1, 8, 6, 6}, Shape{1, 8, 5, 7}}) {
    auto x = rand_tensor(s, 61, static_cast<uint64_t>(s[2] * 10 + s[3]));
    auto y = blk.forward(x);
    CHECK(y.shape() == s);
    CHECK(y.all_finite());
  }
}
