// Acceptance gate: one pass/fail line per criterion, non-zero exit on any
// failure. Heavier criteria reuse the library's own training loop on the
// synthetic dataset, so this binary is also an end-to-end smoke test.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "coswin/gradsuite.hpp"
#include "coswin/metrics.hpp"
#include "coswin/swin.hpp"
#include "coswin/trainer.hpp"

using namespace coswin;

namespace {

int g_failures = 0;

void report(int n, const std::string& name, bool ok, const std::string& detail = "") {
  std::cout << "[PRIMARY] criterion " << n << " (" << name << "): "
            << (ok ? "PASS" : "FAIL");
  if (!detail.empty()) std::cout << " — " << detail;
  std::cout << std::endl;
  if (!ok) ++g_failures;
}

double now_s() {
  using clk = std::chrono::steady_clock;
  return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

Tensor<double> rand_tensor(Shape s, uint64_t seed, uint64_t stream, double lo = -1.0,
                           double hi = 1.0) {
  Rng rng(seed, stream);
  std::vector<double> d(static_cast<size_t>(numel(s)));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return Tensor<double>::from(std::move(s), std::move(d));
}

std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)),
                              std::istreambuf_iterator<char>());
}

// ---- criterion 1 -----------------------------------------------------------

void criterion_metric_identity() {
  double f1 = f1_from(0.8170, 0.7800);
  double iou = iou_from_f1(f1);
  bool ok = std::abs(f1 - 0.7981) < 1e-4 && std::abs(iou - 0.6640) < 1e-4;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "f1=%.6f iou=%.6f", f1, iou);
  report(1, "metric identities vs published row", ok, buf);
}

// ---- criterion 2 -----------------------------------------------------------

void criterion_grad_suite() {
  double t0 = now_s();
  auto entries = run_grad_suite(0);
  double elapsed = now_s() - t0;
  bool ok = elapsed < 60.0;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& e : entries) {
    if (!e.pass) ok = false;
    if (e.report.max_rel_err > worst) {
      worst = e.report.max_rel_err;
      worst_name = e.name;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu layer kinds, worst rel err %.2e (%s), %.1f s",
                entries.size(), worst, worst_name.c_str(), elapsed);
  report(2, "finite-difference gradient suite", ok, buf);
}

// ---- criterion 3 -----------------------------------------------------------

int region_oracle(int64_t h, int64_t w, int64_t H, int64_t W, int64_t M, int64_t s) {
  int64_t sh = (h + s) % H, sw = (w + s) % W;
  int rh = sh >= H - s ? 2 : (sh >= H - M ? 1 : 0);
  int rw = sw >= W - s ? 2 : (sw >= W - M ? 1 : 0);
  return rh * 3 + rw;
}

void criterion_structural() {
  bool ok = true;
  // Partition/reverse and shift/unshift roundtrips, all H,W <= 8, M in {2,4}.
  for (int64_t M : {2, 4})
    for (int64_t H = M; H <= 8 && ok; H += M)
      for (int64_t W = M; W <= 8 && ok; W += M) {
        auto x = rand_tensor({2, H, W, 3}, 1, static_cast<uint64_t>(H * 64 + W * 8 + M));
        ok = ok && window_reverse(window_partition(x, M), M, 2, H, W).data() == x.data();
        for (int64_t s = 0; s < M; ++s)
          ok = ok && inverse_shift(cyclic_shift(x, s), s).data() == x.data();
        // Shift-mask entries vs exhaustive region enumeration.
        int64_t s = M / 2, nW = W / M, L = M * M;
        auto mask = build_shift_mask<double>(H, W, M, s);
        for (int64_t wh = 0; wh < H / M; ++wh)
          for (int64_t ww = 0; ww < nW; ++ww)
            for (int64_t i = 0; i < L; ++i)
              for (int64_t j = 0; j < L; ++j) {
                int li = region_oracle(wh * M + i / M, ww * M + i % M, H, W, M, s);
                int lj = region_oracle(wh * M + j / M, ww * M + j % M, H, W, M, s);
                double expect = li != lj ? -kMaskLarge : 0.0;
                if (mask.data()[((wh * nW + ww) * L + i) * L + j] != expect) ok = false;
              }
      }
  // Attention rows sum to 1 +- 1e-6.
  ParamRegistry<double> reg(5);
  WindowAttention<double> attn(reg, "wa", {4, 2, 8, true});
  auto probs = attn.attention_probs(rand_tensor({3, 16, 8}, 2, 1), Tensor<double>());
  for (int64_t r = 0; r < 3 * 2 * 16; ++r) {
    double sum = 0.0;
    for (int64_t j = 0; j < 16; ++j) sum += probs.data()[r * 16 + j];
    if (std::abs(sum - 1.0) > 1e-6) ok = false;
  }
  report(3, "structural invariants", ok);
}

// ---- criterion 4 -----------------------------------------------------------

void criterion_fusion_bound() {
  CoSwinStageConfig sc;
  sc.in_channels = 4;
  sc.out_channels = 8;
  sc.window = {2, 2, 8, true};
  ParamRegistry<double> reg(6);
  CoSwinStage<double> stage(reg, "st", sc);

  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto x = rand_tensor({1, 4, 4, 4}, 7, static_cast<uint64_t>(trial), -3.0, 3.0);
    auto y = stage.forward(x, false);
    auto f = stage.res_branch(x, false);
    for (size_t i = 0; i < y.data().size(); ++i)
      worst = std::max(worst, std::abs(y.data()[i] - f.data()[i]));
  }
  bool ok = worst <= 1.0;

  std::fill(stage.reduce_.weight_.data().begin(), stage.reduce_.weight_.data().end(), 0.0);
  std::fill(stage.reduce_.bias_.data().begin(), stage.reduce_.bias_.data().end(), 0.0);
  auto x = rand_tensor({2, 4, 8, 8}, 8, 1);
  ok = ok && stage.forward(x, false).data() == stage.res_branch(x, false).data();
  char buf[64];
  std::snprintf(buf, sizeof(buf), "max|Y-f(X)| = %.4f over 1000 inputs", worst);
  report(4, "tanh fusion bound and g-zeroed fixed point", ok, buf);
}

// ---- criteria 5 and 6 ------------------------------------------------------

struct AblationResult {
  double mean_f1 = 0.0;
  double best_test_iou = 0.0;
  double max_run_s = 0.0;
};

AblationResult run_variant(const std::vector<Sample>& train_set,
                           const std::vector<Sample>& val_set,
                           const std::vector<Sample>& test_set, bool use_coswin,
                           bool use_cfilter, const std::string& tag) {
  AblationResult r;
  double f1_sum = 0.0;
  for (uint64_t seed : {1, 2, 3}) {
    RunConfig cfg;
    cfg.net.use_coswin = use_coswin;
    cfg.net.use_cfilter = use_cfilter;
    cfg.epochs = 5;
    cfg.seed = seed;
    cfg.out_dir = "/tmp/coswin_accept/" + tag + "_s" + std::to_string(seed);
    double t0 = now_s();
    RoadNet<float> net(cfg.net, seed);
    TrainResult tr = train_model(cfg, net, train_set, val_set, /*quiet=*/true);

    RoadNet<float> best(cfg.net, seed);
    attach_loss_params(best.registry());
    load_model(tr.best_checkpoint, best.registry());
    Scores s = evaluate_model(best, test_set, cfg.threshold, cfg.batch);
    double run_s = now_s() - t0;
    f1_sum += s.f1;
    r.best_test_iou = std::max(r.best_test_iou, s.iou);
    r.max_run_s = std::max(r.max_run_s, run_s);
    std::cout << "  [ablation] " << tag << " seed " << seed << ": test f1 " << s.f1
              << " iou " << s.iou << " (" << static_cast<int>(run_s) << " s, "
              << tr.epochs_run << " epochs)" << std::endl;
  }
  r.mean_f1 = f1_sum / 3.0;
  return r;
}

void criteria_ablation_and_sanity() {
  SynthConfig scfg;  // 64x64 tiles, defaults
  scfg.seed = 7;
  std::vector<Sample> train_set, val_set, test_set;
  for (int64_t i = 0; i < 250; ++i) {
    Sample s = synth_sample(scfg, i);
    if (s.split == "train") train_set.push_back(std::move(s));
    else if (s.split == "val") val_set.push_back(std::move(s));
    else test_set.push_back(std::move(s));
  }
  std::cout << "  [ablation] dataset: " << train_set.size() << " train / "
            << val_set.size() << " val / " << test_set.size() << " test" << std::endl;

  AblationResult base = run_variant(train_set, val_set, test_set, false, false, "none");
  AblationResult cosw = run_variant(train_set, val_set, test_set, true, false, "coswin");
  AblationResult cfil = run_variant(train_set, val_set, test_set, false, true, "cfilter");
  AblationResult full = run_variant(train_set, val_set, test_set, true, true, "both");

  const double tol = 0.01;
  bool order_ok = full.mean_f1 >= cosw.mean_f1 - tol && cosw.mean_f1 >= base.mean_f1 - tol &&
                  full.mean_f1 >= cfil.mean_f1 - tol && cfil.mean_f1 >= base.mean_f1 - tol;
  double slowest = std::max(std::max(base.max_run_s, cosw.max_run_s),
                            std::max(cfil.max_run_s, full.max_run_s));
  bool time_ok = slowest <= 1800.0;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "mean test F1: baseline %.4f, coswin %.4f, cfilter %.4f, full %.4f; "
                "slowest run %.0f s",
                base.mean_f1, cosw.mean_f1, cfil.mean_f1, full.mean_f1, slowest);
  report(5, "ablation ordering over 3 seeds", order_ok && time_ok, buf);

  std::snprintf(buf, sizeof(buf), "best full-model test IoU %.4f within 5 epochs",
                full.best_test_iou);
  report(6, "training sanity, test IoU >= 0.60", full.best_test_iou >= 0.60, buf);
}

// ---- criterion 7 -----------------------------------------------------------

void criterion_loss_reductions() {
  // alpha*w = 1 must reduce wbce to an independently coded plain BCE.
  Rng rng(9, 1);
  std::vector<double> t(2 * 64);
  for (size_t i = 0; i < 64; ++i) t[i] = rng.uniform(0.0, 1.0) < 0.25 ? 1.0 : 0.0;
  for (size_t i = 0; i < 64; ++i) t[64 + i] = t[i];  // equal per-sample road count
  auto target = Tensor<double>::from({2, 1, 8, 8}, t);
  auto pred = rand_tensor({2, 1, 8, 8}, 9, 2, 0.05, 0.95);
  double road = 0.0;
  for (size_t i = 0; i < 64; ++i) road += t[i];
  double w = 1.0 - road / 64.0;

  double oracle = 0.0;
  for (size_t i = 0; i < t.size(); ++i) {
    double p = std::min(std::max(pred.data()[i], kProbEps), 1.0 - kProbEps);
    oracle += -(t[i] * std::log(p) + (1.0 - t[i]) * std::log(1.0 - p));
  }
  oracle /= static_cast<double>(t.size());
  double got = wbce(pred, target, 1.0 / w).item();
  bool ok = std::abs(got - oracle) < 1e-9;

  // total_loss with s1 = s2 = 0 is exactly the sum of its terms.
  auto lw = Tensor<double>::scalar(0.37);
  auto l2 = Tensor<double>::scalar(0.11);
  auto s1 = Tensor<double>::zeros({1}, true);
  auto s2 = Tensor<double>::zeros({1}, true);
  ok = ok && total_loss(lw, l2, s1, s2).item() == 0.37 + 0.11;
  report(7, "loss reductions", ok);
}

// ---- criterion 8 -----------------------------------------------------------

void criterion_determinism() {
  SynthConfig scfg;
  scfg.seed = 7;
  std::vector<Sample> train_set, val_set;
  for (int64_t i = 0; i < 60 && train_set.size() < 40; ++i) {
    Sample s = synth_sample(scfg, i);
    if (s.split == "train") train_set.push_back(std::move(s));
  }
  for (int64_t i = 0; i < 250 && val_set.size() < 10; ++i) {
    Sample s = synth_sample(scfg, i);
    if (s.split == "val") val_set.push_back(std::move(s));
  }

  RunConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 3;
  bool ok = true;
  std::string detail;

  cfg.out_dir = "/tmp/coswin_accept/det_a";
  RoadNet<float> net_a(cfg.net, cfg.seed);
  TrainResult ra = train_model(cfg, net_a, train_set, val_set, true);
  cfg.out_dir = "/tmp/coswin_accept/det_b";
  RoadNet<float> net_b(cfg.net, cfg.seed);
  TrainResult rb = train_model(cfg, net_b, train_set, val_set, true);

  if (read_bytes(ra.last_checkpoint) != read_bytes(rb.last_checkpoint)) {
    ok = false;
    detail = "repeated runs differ in last.ckpt";
  }
  if (read_bytes("/tmp/coswin_accept/det_a/log.csv") !=
      read_bytes("/tmp/coswin_accept/det_b/log.csv")) {
    ok = false;
    detail = "repeated runs differ in log.csv";
  }

  // save -> load -> save byte identity.
  const std::string p1 = "/tmp/coswin_accept/rt1.ckpt";
  const std::string p2 = "/tmp/coswin_accept/rt2.ckpt";
  save_model(p1, net_a.registry());
  RoadNet<float> fresh(cfg.net, 99);
  attach_loss_params(fresh.registry());
  load_model(p1, fresh.registry());
  save_model(p2, fresh.registry());
  if (read_bytes(p1) != read_bytes(p2)) {
    ok = false;
    detail = "save/load/save not byte-identical";
  }

  // Strict load must reject a mismatched config and name a tensor.
  NetworkConfig wide = cfg.net;
  wide.widths = {32, 64, 96};
  RoadNet<float> mismatched(wide, 1);
  attach_loss_params(mismatched.registry());
  try {
    load_model(p1, mismatched.registry());
    ok = false;
    detail = "mismatched load was accepted";
  } catch (const CkptMismatchError& e) {
    if (std::string(e.what()).find("'") == std::string::npos) {
      ok = false;
      detail = "mismatch error does not name a tensor";
    }
  }
  report(8, "determinism and persistence", ok, detail);
}

// ---- criterion 9 -----------------------------------------------------------

void criterion_oracles() {
  bool ok = true;
  // conv2d vs direct 7-loop oracle, 100 random instances.
  Rng shape_rng(11, 1);
  for (int inst = 0; inst < 100 && ok; ++inst) {
    int64_t N = shape_rng.uniform_int(1, 2), Cin = shape_rng.uniform_int(1, 3);
    int64_t Cout = shape_rng.uniform_int(1, 3), k = shape_rng.uniform_int(1, 3);
    int64_t stride = shape_rng.uniform_int(1, 2), pad = shape_rng.uniform_int(0, 1);
    int64_t H = shape_rng.uniform_int(k, 7), W = shape_rng.uniform_int(k, 7);
    auto x = rand_tensor({N, Cin, H, W}, 12, static_cast<uint64_t>(inst));
    auto wt = rand_tensor({Cout, Cin, k, k}, 13, static_cast<uint64_t>(inst));
    auto b = rand_tensor({Cout}, 14, static_cast<uint64_t>(inst));
    auto y = conv2d(x, wt, &b, stride, pad);
    int64_t Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t co = 0; co < Cout; ++co)
        for (int64_t oy = 0; oy < Ho; ++oy)
          for (int64_t ox = 0; ox < Wo; ++ox) {
            double acc = b.data()[co];
            for (int64_t ci = 0; ci < Cin; ++ci)
              for (int64_t ky = 0; ky < k; ++ky)
                for (int64_t kx = 0; kx < k; ++kx) {
                  int64_t iy = oy * stride + ky - pad, ix = ox * stride + kx - pad;
                  if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                  acc += x.data()[((n * Cin + ci) * H + iy) * W + ix] *
                         wt.data()[((co * Cin + ci) * k + ky) * k + kx];
                }
            double got = y.data()[((n * Cout + co) * Ho + oy) * Wo + ox];
            if (std::abs(got - acc) > 1e-6) ok = false;
          }
  }
  // confusion vs per-pixel loop oracle, 100 random instances, exact.
  for (int inst = 0; inst < 100 && ok; ++inst) {
    Rng rng(15, static_cast<uint64_t>(inst));
    BinaryMask pred({12, 12}), truth({12, 12});
    for (auto& v : pred.data) v = rng.uniform(0.0, 1.0) < 0.5 ? 1 : 0;
    for (auto& v : truth.data) v = rng.uniform(0.0, 1.0) < 0.3 ? 1 : 0;
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
      tp += pred.data[i] && truth.data[i];
      fp += pred.data[i] && !truth.data[i];
      fn += !pred.data[i] && truth.data[i];
      tn += !pred.data[i] && !truth.data[i];
    }
    auto c = confusion(pred, truth);
    if (c.tp != tp || c.fp != fp || c.fn != fn || c.tn != tn) ok = false;
  }
  report(9, "conv2d and confusion oracle equivalence", ok);
}

}  // namespace

int main() {
  Eigen::setNbThreads(1);
  criterion_metric_identity();
  criterion_grad_suite();
  criterion_structural();
  criterion_fusion_bound();
  criterion_loss_reductions();
  criterion_oracles();
  criterion_determinism();
  criteria_ablation_and_sanity();
  std::cout << (g_failures == 0 ? "ACCEPTANCE: all criteria passed"
                                : "ACCEPTANCE: FAILURES PRESENT")
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
