#pragma once

#include <vector>

#include "coswin/swin.hpp"

namespace coswin {

enum class FusionMode { Tanh, BatchNorm, None };

struct CoSwinStageConfig {
  int64_t in_channels = 32;
  int64_t out_channels = 64;
  int64_t num_res_blocks = 1;
  int64_t num_swin_blocks = 1;  // W-MSA/SW-MSA pairs
  WindowAttentionConfig window;
  bool downsample = true;
  FusionMode fusion = FusionMode::Tanh;
  bool use_swin_branch = true;  // false = ResNet branch alone (ablation)
};

// Dual-branch stage: Y = f(X) + tanh(g(X)), where f is a ResNet chain and g a
// stride-reduced Swin chain. Branch output shapes are forced equal by
// construction; a disagreement is a configuration bug, not a runtime state.
template <typename T>
class CoSwinStage {
 public:
  CoSwinStage() = default;
  CoSwinStage(ParamRegistry<T>& reg, const std::string& prefix, CoSwinStageConfig cfg)
      : cfg_(cfg) {
    if (cfg.window.embed != cfg.out_channels)
      throw ConfigError("CoSwin stage: window embed dim must equal out_channels");
    int64_t stride = cfg.downsample ? 2 : 1;
    res_.emplace_back(reg, prefix + ".res.0", cfg.in_channels, cfg.out_channels, stride);
    for (int64_t i = 1; i < cfg.num_res_blocks; ++i)
      res_.emplace_back(reg, prefix + ".res." + std::to_string(i), cfg.out_channels,
                        cfg.out_channels, 1);
    if (cfg.use_swin_branch) {
      reduce_ = Conv2d<T>(reg, prefix + ".swin.reduce", cfg.in_channels, cfg.out_channels,
                          3, stride, 1);
      for (int64_t i = 0; i < cfg.num_swin_blocks; ++i)
        swin_.emplace_back(reg, prefix + ".swin." + std::to_string(i), cfg.window);
      if (cfg.fusion == FusionMode::BatchNorm)
        fuse_bn_ = BatchNorm2d<T>(reg, prefix + ".fuse_bn", cfg.out_channels);
    }
  }

  Tensor<T> res_branch(const Tensor<T>& x, bool train) {
    Tensor<T> h = x;
    for (auto& b : res_) h = b.forward(h, train);
    return h;
  }

  Tensor<T> swin_branch(const Tensor<T>& x) const {
    Tensor<T> h = reduce_.forward(x);
    for (auto& b : swin_) h = b.forward(h);
    return h;
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    check(x.dim(1) == cfg_.in_channels,
          "CoSwin stage channel mismatch: got " + shape_str(x.shape()));
    Tensor<T> f = res_branch(x, train);
    if (!cfg_.use_swin_branch) return f;
    Tensor<T> g = swin_branch(x);
    switch (cfg_.fusion) {
      case FusionMode::Tanh: return add(f, tanh_op(g));
      case FusionMode::BatchNorm: return add(f, fuse_bn_.forward(g, train));
      case FusionMode::None: return add(f, g);
    }
    return f;
  }

  std::vector<ResNetBasicBlock<T>> res_;
  Conv2d<T> reduce_;
  std::vector<SwinBlock<T>> swin_;
  BatchNorm2d<T> fuse_bn_;

 private:
  CoSwinStageConfig cfg_;
};

template <typename T>
struct EncoderOutput {
  Tensor<T> bottleneck;
  std::vector<Tensor<T>> skips;  // shallowest first, always 3
};

// Stem (7x7 stride-2 conv, BN, ReLU) followed by three CoSwin stages, each
// halving resolution. Skips are the pre-downsample inputs of each stage.
template <typename T>
class CoSwinEncoder {
 public:
  CoSwinEncoder() = default;
  CoSwinEncoder(ParamRegistry<T>& reg, const std::string& prefix,
                const std::vector<int64_t>& widths, int64_t window, int64_t heads,
                int64_t res_blocks, int64_t swin_blocks, FusionMode fusion, bool use_coswin) {
    check(widths.size() == 3, "encoder expects 3 stage widths");
    stem_conv_ = Conv2d<T>(reg, prefix + ".stem.conv", 3, widths[0], 7, 2, 3, /*bias=*/false);
    stem_bn_ = BatchNorm2d<T>(reg, prefix + ".stem.bn", widths[0]);
    int64_t ins[3] = {widths[0], widths[1], widths[2]};
    int64_t outs[3] = {widths[1], widths[2], widths[2]};
    for (int i = 0; i < 3; ++i) {
      CoSwinStageConfig sc;
      sc.in_channels = ins[i];
      sc.out_channels = outs[i];
      sc.num_res_blocks = res_blocks;
      sc.num_swin_blocks = swin_blocks;
      sc.window = {window, heads, outs[i], true};
      sc.downsample = true;
      sc.fusion = fusion;
      sc.use_swin_branch = use_coswin;
      stages_.emplace_back(reg, prefix + ".stage" + std::to_string(i + 1), sc);
    }
  }

  EncoderOutput<T> forward(const Tensor<T>& image, bool train) {
    const Shape& s = image.shape();
    check(s.size() == 4 && s[1] == 3, "encoder expects [N,3,H,W]");
    if (s[2] % 16 != 0 || s[3] % 16 != 0)
      throw ShapeError("encoder input extents must be divisible by 16 (stem stride 2 "
                       "and three stage strides 2), got " + shape_str(s));
    Tensor<T> h = relu(stem_bn_.forward(stem_conv_.forward(image), train));
    EncoderOutput<T> out;
    for (auto& st : stages_) {
      out.skips.push_back(h);
      h = st.forward(h, train);
    }
    out.bottleneck = h;  // intermediate connection module is the identity
    return out;
  }

  Conv2d<T> stem_conv_;
  BatchNorm2d<T> stem_bn_;
  std::vector<CoSwinStage<T>> stages_;
};

}  // namespace coswin
