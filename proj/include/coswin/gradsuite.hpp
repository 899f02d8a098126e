#pragma once

#include <functional>
#include <string>
#include <vector>

#include "coswin/cfilter.hpp"
#include "coswin/coswin.hpp"
#include "coswin/gradcheck.hpp"
#include "coswin/loss.hpp"
#include "coswin/roadnet.hpp"

namespace coswin {

struct GradSuiteEntry {
  std::string name;
  double tolerance = 0.0;
  GradCheckReport report;
  bool pass = false;
};

// f64 finite-difference suite over every layer kind plus the end-to-end
// network. `corrupt_tanh` swaps in a deliberately wrong tanh backward so the
// failure path itself can be tested.
inline std::vector<GradSuiteEntry> run_grad_suite(uint64_t seed, bool corrupt_tanh = false) {
  constexpr double kStep = 1e-3;
  constexpr double kPrimTol = 1e-6;
  constexpr double kCompTol = 1e-4;

  std::vector<GradSuiteEntry> out;
  auto run = [&](const std::string& name, double tol,
                 const std::vector<std::pair<std::string, Tensor<double>>>& params,
                 const std::function<Tensor<double>()>& fn, int64_t samples = 0) {
    GradSuiteEntry e;
    e.name = name;
    e.tolerance = tol;
    e.report = gradcheck(params, fn, kStep, samples, seed);
    e.pass = e.report.max_rel_err < tol;
    out.push_back(e);
  };

  auto rand_tensor = [&](Shape shape, uint64_t stream, double lo, double hi) {
    Rng rng(seed, stream);
    std::vector<double> v(static_cast<size_t>(numel(shape)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    Tensor<double> t = Tensor<double>::from(std::move(shape), std::move(v));
    t.set_requires_grad(true);
    return t;
  };

  // --- primitive ops --------------------------------------------------------
  {
    Tensor<double> x = rand_tensor({3, 5}, 1, -1.5, 1.5);
    auto wrong_tanh = [](const Tensor<double>& a) {
      return unary_op(a, [](double v) { return std::tanh(v); },
                      [](double, double y) { return 1.0 - 0.9 * y * y; });
    };
    run("tanh", kPrimTol, {{"x", x}}, [x, corrupt_tanh, wrong_tanh] {
      return sum_all(corrupt_tanh ? wrong_tanh(x) : tanh_op(x));
    });
  }
  {
    Tensor<double> x = rand_tensor({3, 5}, 2, -2.0, 2.0);
    run("sigmoid", kPrimTol, {{"x", x}}, [x] { return sum_all(mul(sigmoid(x), sigmoid(x))); });
  }
  {
    Tensor<double> x = rand_tensor({3, 5}, 3, 0.2, 2.0);  // away from the kink at 0
    run("relu", kPrimTol, {{"x", x}}, [x] { return sum_all(relu(x)); });
  }
  {
    Tensor<double> x = rand_tensor({3, 5}, 4, -1.5, 1.5);
    run("gelu", kPrimTol, {{"x", x}}, [x] { return sum_all(gelu(x)); });
  }
  {
    Tensor<double> x = rand_tensor({3, 4}, 5, 0.3, 2.0);
    run("exp_log", kPrimTol, {{"x", x}}, [x] { return sum_all(mul(exp_op(neg(x)), log_op(x))); });
  }
  {
    Tensor<double> a = rand_tensor({2, 3, 4}, 6, -1.0, 1.0);
    Tensor<double> b = rand_tensor({2, 1, 4}, 7, -1.0, 1.0);
    run("elementwise_broadcast", kPrimTol, {{"a", a}, {"b", b}},
        [a, b] { return sum_all(mul(add(a, b), sub(a, b))); });
  }
  {
    Tensor<double> a = rand_tensor({4, 5}, 8, -1.0, 1.0);
    Tensor<double> b = rand_tensor({5, 3}, 9, -1.0, 1.0);
    run("matmul", kPrimTol, {{"a", a}, {"b", b}},
        [a, b] { return sum_all(mul(matmul(a, b), matmul(a, b))); });
  }
  {
    Tensor<double> a = rand_tensor({3, 2, 4}, 10, -1.0, 1.0);
    Tensor<double> b = rand_tensor({3, 5, 4}, 11, -1.0, 1.0);
    run("matmul_batched_transb", kPrimTol, {{"a", a}, {"b", b}},
        [a, b] { return sum_all(matmul(a, b, true)); });
  }
  {
    Tensor<double> x = rand_tensor({4, 6}, 12, -2.0, 2.0);
    Tensor<double> w = rand_tensor({4, 6}, 13, -1.0, 1.0);
    run("softmax", kPrimTol, {{"x", x}, {"w", w}},
        [x, w] { return sum_all(mul(softmax_lastdim(x), w)); });
  }
  {
    Tensor<double> x = rand_tensor({3, 4, 5}, 14, -2.0, 2.0);  // distinct values: unique argmax
    run("reduce_max_mean", kPrimTol, {{"x", x}}, [x] {
      return add(sum_all(reduce(x, ReduceKind::Max, 1)),
                 sum_all(reduce(x, ReduceKind::Mean, 2)));
    });
  }

  // --- composed layers ------------------------------------------------------
  {
    ParamRegistry<double> reg(seed);
    Conv2d<double> conv(reg, "conv", 3, 4, 3, 1, 1);
    Tensor<double> x = rand_tensor({2, 3, 8, 8}, 20, -1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> ps{{"x", x}};
    for (auto& p : reg.params()) ps.emplace_back(p.name, p.tensor);
    run("conv2d", kCompTol, ps, [&conv, x] { return sum_all(mul(conv.forward(x), conv.forward(x))); });
  }
  {
    ParamRegistry<double> reg(seed);
    ConvTranspose2d<double> up(reg, "up", 3, 2, 2, 2);
    Tensor<double> x = rand_tensor({1, 3, 5, 5}, 21, -1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> ps{{"x", x}};
    for (auto& p : reg.params()) ps.emplace_back(p.name, p.tensor);
    run("conv_transpose2d", kCompTol, ps, [&up, x] { return sum_all(mul(up.forward(x), up.forward(x))); });
  }
  {
    Tensor<double> x = rand_tensor({1, 2, 6, 6}, 22, -2.0, 2.0);
    run("maxpool2d", kCompTol, {{"x", x}}, [x] { return sum_all(maxpool2d(x, 2, 2)); });
  }
  {
    ParamRegistry<double> reg(seed);
    BatchNorm2d<double> bn(reg, "bn", 3);
    Tensor<double> x = rand_tensor({2, 3, 4, 4}, 23, -1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> ps{{"x", x}};
    for (auto& p : reg.params()) ps.emplace_back(p.name, p.tensor);
    run("batch_norm", kCompTol, ps,
        [&bn, x] { return sum_all(mul(bn.forward(x, true), bn.forward(x, true))); });
  }
  {
    ParamRegistry<double> reg(seed);
    LayerNorm<double> ln(reg, "ln", 16);
    Tensor<double> x = rand_tensor({4, 16}, 24, -1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> ps{{"x", x}};
    for (auto& p : reg.params()) ps.emplace_back(p.name, p.tensor);
    run("layer_norm", kCompTol, ps,
        [&ln, x] { return sum_all(mul(ln.forward(x), ln.forward(x))); });
  }
  {
    ParamRegistry<double> reg(seed);
    WindowAttentionConfig cfg{4, 2, 16, true};
    WindowAttention<double> attn(reg, "attn", cfg);
    Tensor<double> x = rand_tensor({2, 16, 16}, 25, -1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> ps{{"x", x}};
    for (auto& p : reg.params()) ps.emplace_back(p.name, p.tensor);
    Tensor<double> nomask;
    run("wmsa_no_shift", kCompTol, ps,
        [&attn, x, nomask] { return sum_all(attn.forward(x, nomask)); });
    Tensor<double> mask = build_shift_mask<double>(8, 4, 4, 2);  // 2 windows
    run("wmsa_shift_mask", kCompTol, ps,
        [&attn, x, mask] { return sum_all(attn.forward(x, mask)); });
  }
  {
    ParamRegistry<double> reg(seed);
    WindowAttentionConfig cfg{4, 2, 8, true};
    SwinBlock<double> blk(reg, "swin", cfg);
    Tensor<double> x = rand_tensor({1, 8, 8, 8}, 26, -1.0, 1.0);  // NCHW
    std::vector<std::pair<std::string, Tensor<double>>> ps{{"x", x}};
    for (auto& p : reg.params()) ps.emplace_back(p.name, p.tensor);
    run("swin_block", kCompTol, ps, [&blk, x] { return sum_all(blk.forward(x)); }, 2);
  }
  {
    ParamRegistry<double> reg(seed);
    ResNetBasicBlock<double> blk(reg, "res", 4, 8, 2);
    Tensor<double> x = rand_tensor({2, 4, 8, 8}, 27, 0.1, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> ps{{"x", x}};
    for (auto& p : reg.params()) ps.emplace_back(p.name, p.tensor);
    run("resnet_basic_block", kCompTol, ps,
        [&blk, x] { return sum_all(mul(blk.forward(x, true), blk.forward(x, true))); }, 4);
  }
  {
    ParamRegistry<double> reg(seed);
    CoSwinStageConfig sc;
    sc.in_channels = 8;
    sc.out_channels = 8;
    sc.window = {4, 2, 8, true};
    CoSwinStage<double> stage(reg, "stage", sc);
    Tensor<double> x = rand_tensor({1, 8, 16, 16}, 28, -1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> ps{{"x", x}};
    for (auto& p : reg.params()) ps.emplace_back(p.name, p.tensor);
    run("coswin_block", kCompTol, ps,
        [&stage, x] { return sum_all(stage.forward(x, true)); }, 2);
  }
  {
    ParamRegistry<double> reg(seed);
    CFilter<double> cf(reg, "cf", 3);
    Tensor<double> x1 = rand_tensor({1, 4, 8, 8}, 29, -1.0, 1.0);
    Tensor<double> x2 = rand_tensor({1, 4, 8, 8}, 30, -1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> ps{{"x1", x1}, {"x2", x2}};
    for (auto& p : reg.params()) ps.emplace_back(p.name, p.tensor);
    run("cfilter", kCompTol, ps, [&cf, x1, x2] { return sum_all(cf.forward(x1, x2)); });
  }
  {
    Tensor<double> logits = rand_tensor({2, 1, 4, 4}, 31, -2.0, 2.0);
    Rng rng(seed, 32);
    std::vector<double> tgt(32);
    for (auto& v : tgt) v = (rng.uniform() < 0.3) ? 1.0 : 0.0;
    Tensor<double> target = Tensor<double>::from({2, 1, 4, 4}, std::move(tgt));
    run("wbce", kPrimTol, {{"logits", logits}},
        [logits, target] { return wbce(sigmoid(logits), target, 1.5); });
  }
  {
    Tensor<double> a = rand_tensor({1}, 33, 0.5, 1.5);
    Tensor<double> b = rand_tensor({1}, 34, 0.1, 0.5);
    Tensor<double> s1 = rand_tensor({1}, 35, -0.3, 0.3);
    Tensor<double> s2 = rand_tensor({1}, 36, -0.3, 0.3);
    run("total_loss", kPrimTol, {{"a", a}, {"b", b}, {"s1", s1}, {"s2", s2}},
        [a, b, s1, s2] { return total_loss(mul(a, a), mul(b, b), s1, s2); });
  }
  {
    NetworkConfig nc;
    nc.tile = 32;
    nc.widths = {4, 8, 8};
    nc.heads = 2;
    RoadNet<double> net(nc, seed);
    Tensor<double> x = rand_tensor({1, 3, 32, 32}, 37, 0.0, 1.0);
    Rng rng(seed, 38);
    std::vector<double> tgt(32 * 32);
    for (auto& v : tgt) v = (rng.uniform() < 0.2) ? 1.0 : 0.0;
    Tensor<double> target = Tensor<double>::from({1, 1, 32, 32}, std::move(tgt));
    std::vector<std::pair<std::string, Tensor<double>>> ps;
    for (auto& p : net.registry().params()) ps.emplace_back(p.name, p.tensor);
    // BN train mode needs >= 2 samples; duplicate the input along the batch.
    run("end_to_end_32", kCompTol, ps,
        [&net, x, target] {
          Tensor<double> xx = concat<double>({x, x}, 0);
          Tensor<double> tt = concat<double>({target, target}, 0);
          Tensor<double> lw = wbce(net.forward(xx, true), tt, 1.5);
          return total_loss(lw, l2_penalty(net.registry()),
                            Tensor<double>::zeros({1}), Tensor<double>::zeros({1}));
        },
        1);
  }
  return out;
}

}  // namespace coswin
