#include "coswin/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace coswin {

namespace {

constexpr uint64_t kShuffleSalt = 0x53485546464c4531ull;   // per-epoch ordering
constexpr uint64_t kAugmentSalt = 0x4155474d454e5431ull;   // per-epoch augmentation ops

std::string log_header() {
  return "epoch,train_loss,val_precision,val_recall,val_f1,val_iou,val_oa,exp_neg_s1,exp_neg_s2";
}

std::string log_row(const EpochLog& e) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << e.epoch << ',' << e.train_loss << ',' << e.val.precision << ',' << e.val.recall << ','
     << e.val.f1 << ',' << e.val.iou << ',' << e.val.oa << ',' << e.exp_neg_s1 << ','
     << e.exp_neg_s2;
  return os.str();
}

void write_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write training log: " + path);
  f << log_header() << "\n";
  for (const auto& e : log) f << log_row(e) << "\n";
}

}  // namespace

Tensor<float> batch_images(const std::vector<Sample>& samples, const std::vector<int64_t>& idx) {
  check(!idx.empty(), "empty batch");
  int64_t h = samples[idx[0]].h, w = samples[idx[0]].w;
  int64_t n = static_cast<int64_t>(idx.size());
  std::vector<float> data(static_cast<size_t>(n * 3 * h * w));
  for (int64_t b = 0; b < n; ++b) {
    const Sample& s = samples[idx[b]];
    check(s.h == h && s.w == w, "batch mixes tile sizes");
    std::copy(s.image.begin(), s.image.end(), data.begin() + b * 3 * h * w);
  }
  return Tensor<float>::from({n, 3, h, w}, std::move(data));
}

Tensor<float> batch_targets(const std::vector<Sample>& samples, const std::vector<int64_t>& idx) {
  check(!idx.empty(), "empty batch");
  int64_t h = samples[idx[0]].h, w = samples[idx[0]].w;
  int64_t n = static_cast<int64_t>(idx.size());
  std::vector<float> data(static_cast<size_t>(n * h * w));
  for (int64_t b = 0; b < n; ++b) {
    const Sample& s = samples[idx[b]];
    for (int64_t i = 0; i < h * w; ++i)
      data[b * h * w + i] = static_cast<float>(s.mask.data[i]);
  }
  return Tensor<float>::from({n, 1, h, w}, std::move(data));
}

Sample augment_sample(const Sample& s, int op) {
  check(op >= 0 && op < 8, "augment op out of range");
  if (op == 0) return s;
  bool flip = (op & 4) != 0;
  int rot = op & 3;  // quarter turns, counter-clockwise
  int64_t h = s.h, w = s.w;
  check(h == w, "augmentation assumes square tiles");

  Sample out = s;
  auto src_of = [&](int64_t y, int64_t x) {
    int64_t sy = y, sx = x;
    for (int r = 0; r < rot; ++r) {  // invert one CCW turn: dst(y,x) <- src(x, n-1-y)
      int64_t ty = sx, tx = h - 1 - sy;
      sy = ty;
      sx = tx;
    }
    if (flip) sx = w - 1 - sx;  // horizontal flip applied first in forward order
    return std::pair<int64_t, int64_t>{sy, sx};
  };

  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      auto [sy, sx] = src_of(y, x);
      for (int64_t c = 0; c < 3; ++c)
        out.image[(c * h + y) * w + x] = s.image[(c * h + sy) * w + sx];
      out.mask.data[y * w + x] = s.mask.data[sy * w + sx];
    }
  return out;
}

std::vector<float> infer_image(RoadNet<float>& net, const std::vector<float>& image, int64_t h,
                               int64_t w) {
  int64_t tile = net.config().tile;
  if (h < tile || w < tile)
    throw ShapeError("image " + shape_str({h, w}) + " smaller than tile size " +
                     std::to_string(tile));
  std::vector<double> acc(static_cast<size_t>(h * w), 0.0);
  std::vector<int32_t> cnt(static_cast<size_t>(h * w), 0);
  for (int64_t ty : tile_positions(h, tile, tile))
    for (int64_t tx : tile_positions(w, tile, tile)) {
      std::vector<float> patch(static_cast<size_t>(3 * tile * tile));
      for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < tile; ++y)
          for (int64_t x = 0; x < tile; ++x)
            patch[(c * tile + y) * tile + x] = image[(c * h + ty + y) * w + tx + x];
      Tensor<float> prob =
          net.forward(Tensor<float>::from({1, 3, tile, tile}, std::move(patch)), false);
      const auto& p = prob.data();
      for (int64_t y = 0; y < tile; ++y)
        for (int64_t x = 0; x < tile; ++x) {
          acc[(ty + y) * w + tx + x] += p[y * tile + x];
          ++cnt[(ty + y) * w + tx + x];
        }
    }
  std::vector<float> out(static_cast<size_t>(h * w));
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(acc[i] / cnt[i]);
  return out;
}

Scores evaluate_model(RoadNet<float>& net, const std::vector<Sample>& samples, double threshold,
                      int64_t batch) {
  if (samples.empty()) throw DomainError("evaluate_model: empty sample set");
  ConfusionCounts total;
  int64_t n = static_cast<int64_t>(samples.size());
  for (int64_t start = 0; start < n; start += batch) {
    int64_t stop = std::min(n, start + batch);
    std::vector<int64_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    Tensor<float> prob = net.forward(batch_images(samples, idx), /*train=*/false);
    BinaryMask pred = predict_mask(prob, threshold);
    int64_t per = prob.size() / (stop - start);
    for (int64_t b = 0; b < stop - start; ++b) {
      BinaryMask pm({samples[idx[b]].h, samples[idx[b]].w});
      std::copy(pred.data.begin() + b * per, pred.data.begin() + (b + 1) * per, pm.data.begin());
      total += confusion(pm, samples[idx[b]].mask);
    }
  }
  return scores(total);
}

TrainResult train_model(const RunConfig& cfg, RoadNet<float>& net,
                        const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                        bool quiet) {
  if (train_set.empty() || val_set.empty())
    throw DomainError("train_model needs non-empty train and val sets");

  fs::create_directories(cfg.out_dir);
  save_run_config(cfg, cfg.out_dir + "/config.txt");

  ParamRegistry<float>& reg = net.registry();
  LossParams<float> lp = attach_loss_params(reg);
  Sgd<float> opt(reg, static_cast<float>(cfg.momentum));

  const std::string last_path = cfg.out_dir + "/last.ckpt";
  const std::string best_path = cfg.out_dir + "/best.ckpt";
  save_model(last_path, reg, &opt);  // last-good state before any update

  int64_t n = static_cast<int64_t>(train_set.size());
  int64_t batches_per_epoch = 0;
  for (int64_t start = 0; start < n; start += cfg.batch)
    if (std::min(n, start + cfg.batch) - start >= 2) ++batches_per_epoch;
  if (batches_per_epoch == 0) throw DomainError("train set too small for batch size");
  int64_t total_iters = batches_per_epoch * cfg.epochs;

  TrainResult res;
  res.best_val_iou = -1.0;
  int64_t iter = 0;

  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuf(cfg.seed, kShuffleSalt ^ static_cast<uint64_t>(epoch));
    for (int64_t i = n - 1; i > 0; --i)
      std::swap(order[i], order[shuf.uniform_int(0, i)]);

    std::vector<Sample> epoch_set = train_set;
    if (cfg.augment) {
      Rng aug(cfg.seed, kAugmentSalt ^ static_cast<uint64_t>(epoch));
      for (auto& s : epoch_set) s = augment_sample(s, static_cast<int>(aug.uniform_int(0, 7)));
    }

    double loss_sum = 0.0;
    int64_t loss_batches = 0;
    for (int64_t start = 0; start < n; start += cfg.batch) {
      int64_t stop = std::min(n, start + cfg.batch);
      if (stop - start < 2) continue;  // batch norm needs at least two samples
      std::vector<int64_t> idx(order.begin() + start, order.begin() + stop);

      reg.zero_grad();
      Tensor<float> prob = net.forward(batch_images(epoch_set, idx), /*train=*/true);
      Tensor<float> lw = wbce(prob, batch_targets(epoch_set, idx),
                              static_cast<float>(cfg.alpha));
      Tensor<float> loss = total_loss(lw, l2_penalty(reg), lp.s1, lp.s2);
      double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv))
        throw TrainAbortError("non-finite loss at epoch " + std::to_string(epoch) +
                              "; last-good checkpoint kept at " + last_path);
      loss.backward();
      opt.step(static_cast<float>(poly_lr(cfg.lr, iter, total_iters, cfg.poly_power)));
      ++iter;
      loss_sum += lv;
      ++loss_batches;
    }

    EpochLog e;
    e.epoch = epoch;
    e.train_loss = loss_sum / static_cast<double>(loss_batches);
    e.val = evaluate_model(net, val_set, cfg.threshold, cfg.batch);
    e.exp_neg_s1 = std::exp(-static_cast<double>(lp.s1.data()[0]));
    e.exp_neg_s2 = std::exp(-static_cast<double>(lp.s2.data()[0]));
    res.log.push_back(e);
    res.epochs_run = epoch;

    save_model(last_path, reg, &opt);
    if (e.val.iou > res.best_val_iou) {
      res.best_val_iou = e.val.iou;
      res.best_epoch = epoch;
      save_model(best_path, reg, &opt);
    }
    write_log(cfg.out_dir + "/log.csv", res.log);
    if (!quiet)
      std::cout << "epoch " << epoch << "/" << cfg.epochs << "  loss " << std::fixed
                << std::setprecision(4) << e.train_loss << "  val iou " << e.val.iou
                << std::defaultfloat << std::endl;

    if (cfg.target_val_iou > 0 && e.val.iou >= cfg.target_val_iou) break;
  }

  res.best_checkpoint = best_path;
  res.last_checkpoint = last_path;
  return res;
}

}  // namespace coswin
