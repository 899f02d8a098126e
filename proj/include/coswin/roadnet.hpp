#pragma once

#include <memory>
#include <string>
#include <vector>

#include "coswin/cfilter.hpp"
#include "coswin/coswin.hpp"
#include "coswin/mask.hpp"

namespace coswin {

struct NetworkConfig {
  int64_t tile = 64;
  std::vector<int64_t> widths{32, 64, 128};
  int64_t window = 4;
  int64_t heads = 4;
  int64_t res_blocks = 1;
  int64_t swin_blocks = 1;  // W-MSA/SW-MSA pairs per stage
  int64_t cfilter_kernel = 7;
  FusionMode fusion = FusionMode::Tanh;
  bool use_coswin = true;
  bool use_cfilter = true;

  void validate() const {
    if (tile % 16 != 0)
      throw ConfigError("tile size must be divisible by 16, got " + std::to_string(tile));
    if (widths.size() != 3) throw ConfigError("exactly 3 stage widths required");
    for (int64_t w : widths)
      if (w <= 0) throw ConfigError("stage widths must be positive");
    for (size_t i = 1; i < 3; ++i)
      if (widths[i] % heads != 0 || widths[0] % heads != 0)
        throw ConfigError("stage widths must be divisible by head count");
  }

  // Full-scale preset for 512x512 tiles.
  static NetworkConfig full_scale() {
    NetworkConfig c;
    c.tile = 512;
    c.widths = {64, 128, 256};
    return c;
  }
};

// U-shaped road segmentation network: CoSwin encoder, CFilter-gated skips,
// U-Net style decoder, 1x1 conv + sigmoid head.
template <typename T>
class RoadNet {
 public:
  explicit RoadNet(const NetworkConfig& cfg, uint64_t init_seed = 0)
      : cfg_(cfg), reg_(init_seed) {
    cfg.validate();
    encoder_ = std::make_unique<CoSwinEncoder<T>>(
        reg_, "enc", cfg.widths, cfg.window, cfg.heads, cfg.res_blocks, cfg.swin_blocks,
        cfg.fusion, cfg.use_coswin);
    // Decoder stages, deepest first. Skip channels: w0 @ T/2, w1 @ T/4, w2 @ T/8.
    int64_t w0 = cfg.widths[0], w1 = cfg.widths[1], w2 = cfg.widths[2];
    dec_.emplace_back(reg_, "dec.stage3", w2, w2);
    dec_.emplace_back(reg_, "dec.stage2", w2, w1);
    dec_.emplace_back(reg_, "dec.stage1", w1, w0);
    if (cfg.use_cfilter) {
      cf_.emplace_back(reg_, "cfilter.3", cfg.cfilter_kernel);
      cf_.emplace_back(reg_, "cfilter.2", cfg.cfilter_kernel);
      cf_.emplace_back(reg_, "cfilter.1", cfg.cfilter_kernel);
    }
    head_up_ = ConvTranspose2d<T>(reg_, "head.up", w0, w0, 2, 2);
    head_bn_ = BatchNorm2d<T>(reg_, "head.bn", w0);
    head_conv_ = Conv2d<T>(reg_, "head.conv", w0, 1, 1, 1, 0);
  }

  // image: [N,3,tile,tile] -> probabilities [N,1,tile,tile] in (0,1).
  Tensor<T> forward(const Tensor<T>& image, bool train) {
    const Shape& s = image.shape();
    if (s.size() != 4 || s[2] != cfg_.tile || s[3] != cfg_.tile)
      throw ShapeError("expected [N,3," + std::to_string(cfg_.tile) + "," +
                       std::to_string(cfg_.tile) + "] input, got " + shape_str(s));
    EncoderOutput<T> enc = encoder_->forward(image, train);
    Tensor<T> h = enc.bottleneck;
    for (int i = 0; i < 3; ++i) {
      const Tensor<T>& skip = enc.skips[2 - i];
      Tensor<T> up = dec_[i].up(h);
      Tensor<T> merged = cfg_.use_cfilter ? cf_[i].forward(skip, up) : add(skip, up);
      h = dec_[i].refine(merged, train);
    }
    h = relu(head_bn_.forward(head_up_.forward(h), train));
    return sigmoid(head_conv_.forward(h));
  }

  NetworkConfig config() const { return cfg_; }
  ParamRegistry<T>& registry() { return reg_; }

  // Deterministic, sorted, duplicate-free parameter name list.
  std::vector<std::string> parameter_registry() const { return reg_.sorted_names(); }

 private:
  NetworkConfig cfg_;
  ParamRegistry<T> reg_;
  std::unique_ptr<CoSwinEncoder<T>> encoder_;
  std::vector<UpsampleBlock<T>> dec_;
  std::vector<CFilter<T>> cf_;
  ConvTranspose2d<T> head_up_;
  BatchNorm2d<T> head_bn_;
  Conv2d<T> head_conv_;
};

// mask = prob >= threshold, per scalar.
template <typename T>
BinaryMask predict_mask(const Tensor<T>& prob, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw DomainError("threshold must be in (0,1)");
  BinaryMask m(prob.shape());
  const auto& p = prob.data();
  for (size_t i = 0; i < p.size(); ++i)
    m.data[i] = (static_cast<double>(p[i]) >= threshold) ? 1 : 0;
  return m;
}

}  // namespace coswin
