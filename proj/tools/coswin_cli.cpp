// coswin: road extraction from aerial imagery.
// Subcommands: synth, train, eval, infer, gradcheck, ablate.

#include <CLI11.hpp>
#include <Eigen/Core>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <iomanip>
#include <iostream>

#include "coswin/gradsuite.hpp"
#include "coswin/trainer.hpp"

namespace fs = std::filesystem;
using namespace coswin;

namespace {

void apply_thread_cap() {
  if (const char* env = std::getenv("COSWIN_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) Eigen::setNbThreads(n);
  } else {
    Eigen::setNbThreads(1);  // deterministic by default
  }
}

void apply_ablation(RunConfig& cfg, const std::string& ablation) {
  if (ablation.empty()) return;
  if (ablation == "none") {
    cfg.net.use_coswin = false;
    cfg.net.use_cfilter = false;
  } else if (ablation == "coswin") {
    cfg.net.use_coswin = true;
    cfg.net.use_cfilter = false;
  } else if (ablation == "cfilter") {
    cfg.net.use_coswin = false;
    cfg.net.use_cfilter = true;
  } else if (ablation == "both") {
    cfg.net.use_coswin = true;
    cfg.net.use_cfilter = true;
  } else {
    throw ConfigError("--ablation must be one of none|coswin|cfilter|both");
  }
}

RoadNet<float> restore_net(const RunConfig& cfg, const std::string& ckpt) {
  RoadNet<float> net(cfg.net, cfg.seed);
  attach_loss_params(net.registry());
  load_model(ckpt, net.registry());
  return net;
}

int cmd_synth(int64_t count, int64_t size, uint64_t seed, const std::string& out, bool force,
              const SynthConfig& knobs) {
  if (size % 16 != 0)
    throw ConfigError("--size must be divisible by 16 (encoder downsamples 4 times), got " +
                      std::to_string(size));
  if (fs::exists(out) && !fs::is_empty(out) && !force)
    throw IoError("output directory exists and is not empty (use --force): " + out);
  SynthConfig cfg = knobs;
  cfg.tile = size;
  cfg.seed = seed;
  auto entries = write_synth_dataset(cfg, count, out);
  std::cout << "wrote " << entries.size() << " sample pairs to " << out
            << "\nmanifest sha256: " << manifest_hash(entries) << std::endl;
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& ablation) {
  RunConfig cfg = load_run_config(config_path);
  apply_ablation(cfg, ablation);
  if (cfg.data_dir.empty()) throw ConfigError("data.dir is required for training");
  auto train_set = load_dataset(cfg.data_dir, "train");
  auto val_set = load_dataset(cfg.data_dir, "val");
  RoadNet<float> net(cfg.net, cfg.seed);
  TrainResult res = train_model(cfg, net, train_set, val_set);
  std::cout << "best val iou " << std::fixed << std::setprecision(4) << res.best_val_iou
            << " at epoch " << res.best_epoch << "\ncheckpoints: " << res.best_checkpoint
            << ", " << res.last_checkpoint << std::endl;
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt, const std::string& data_dir,
             const std::string& split, const std::string& name) {
  RunConfig cfg = load_run_config(config_path);
  RoadNet<float> net = restore_net(cfg, ckpt);
  auto samples = load_dataset(data_dir, split);
  if (samples.empty()) throw DomainError("no samples with split '" + split + "' in " + data_dir);
  Scores s = evaluate_model(net, samples, cfg.threshold, cfg.batch);
  std::vector<std::pair<std::string, Scores>> rows{{name, s}};
  std::cout << metrics_csv(rows) << metrics_table(rows);
  return 0;
}

int cmd_infer(const std::string& config_path, const std::string& ckpt, const std::string& image_path,
              const std::string& out_prefix) {
  RunConfig cfg = load_run_config(config_path);
  RoadNet<float> net = restore_net(cfg, ckpt);
  int64_t h = 0, w = 0;
  std::vector<float> image = load_image_rgb(image_path, h, w);
  std::vector<float> prob = infer_image(net, image, h, w);
  std::vector<uint8_t> prob_png(prob.size()), mask_png(prob.size());
  for (size_t i = 0; i < prob.size(); ++i) {
    prob_png[i] = static_cast<uint8_t>(std::lround(prob[i] * 255.0f));
    mask_png[i] = (prob[i] >= cfg.threshold) ? 255 : 0;
  }
  write_gray_png(out_prefix + "_prob.png", h, w, prob_png);
  write_gray_png(out_prefix + "_mask.png", h, w, mask_png);
  std::cout << "wrote " << out_prefix << "_prob.png and " << out_prefix << "_mask.png"
            << std::endl;
  return 0;
}

int cmd_gradcheck(uint64_t seed, bool corrupt_tanh) {
  auto t0 = std::chrono::steady_clock::now();
  auto entries = run_grad_suite(seed, corrupt_tanh);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::vector<std::string> offenders;
  for (const auto& e : entries) {
    std::cout << std::left << std::setw(24) << e.name << std::scientific << std::setprecision(3)
              << e.report.max_rel_err << "  (tol " << e.tolerance << ")  "
              << (e.pass ? "pass" : "FAIL") << std::defaultfloat;
    if (!e.pass) std::cout << "  worst at " << e.report.worst;
    std::cout << "\n";
    if (!e.pass) offenders.push_back(e.name);
  }
  std::cout << "suite runtime " << std::fixed << std::setprecision(1) << secs << " s"
            << std::defaultfloat << std::endl;
  if (secs > 60.0) std::cerr << "warning: gradient suite exceeded the 60 s budget\n";
  if (!offenders.empty()) {
    std::string list;
    for (const auto& o : offenders) list += (list.empty() ? "" : ", ") + o;
    std::cerr << "error: gradient check failed for: " << list << "\n";
    return 1;
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& out_dir, int64_t seeds) {
  RunConfig base = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  if (!data_dir.empty()) base.data_dir = data_dir;
  if (base.data_dir.empty()) throw ConfigError("--data (or data.dir in the config) is required");
  auto train_set = load_dataset(base.data_dir, "train");
  auto val_set = load_dataset(base.data_dir, "val");
  auto test_set = load_dataset(base.data_dir, "test");

  const char* variants[4] = {"none", "coswin", "cfilter", "both"};
  std::vector<std::pair<std::string, Scores>> rows;
  for (const char* variant : variants) {
    ConfusionCounts agg;  // micro-average across seeds
    double p = 0, r = 0, f = 0, iou = 0, oa = 0;
    for (int64_t s = 0; s < seeds; ++s) {
      RunConfig cfg = base;
      apply_ablation(cfg, variant);
      cfg.seed = base.seed + static_cast<uint64_t>(s);
      cfg.out_dir = out_dir + "/" + variant + "_seed" + std::to_string(cfg.seed);
      RoadNet<float> net(cfg.net, cfg.seed);
      train_model(cfg, net, train_set, val_set, /*quiet=*/true);
      RoadNet<float> best(cfg.net, cfg.seed);
      attach_loss_params(best.registry());
      load_model(cfg.out_dir + "/best.ckpt", best.registry());
      Scores sc = evaluate_model(best, test_set, cfg.threshold, cfg.batch);
      p += sc.precision; r += sc.recall; f += sc.f1; iou += sc.iou; oa += sc.oa;
      std::cout << variant << " seed " << cfg.seed << ": test iou " << std::fixed
                << std::setprecision(4) << sc.iou << std::defaultfloat << std::endl;
    }
    Scores mean;
    mean.precision = p / seeds; mean.recall = r / seeds; mean.f1 = f / seeds;
    mean.iou = iou / seeds; mean.oa = oa / seeds;
    (void)agg;
    rows.emplace_back(variant, mean);
  }
  std::cout << metrics_csv(rows) << metrics_table(rows);
  std::ofstream f(out_dir + "/ablation.csv", std::ios::trunc);
  f << metrics_csv(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();
  CLI::App app{"coswin: dual-branch road extraction from aerial imagery"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic road dataset");
  int64_t count = 250, size = 64;
  uint64_t synth_seed = 0;
  std::string out_dir;
  bool force = false;
  SynthConfig knobs;
  synth->add_option("--count", count, "number of sample pairs");
  synth->add_option("--size", size, "tile size in pixels (divisible by 16)");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_flag("--force", force, "overwrite a non-empty output directory");
  synth->add_option("--occl-max", knobs.occl_max, "max occluder patches per tile");
  synth->add_option("--noise", knobs.noise_sigma, "pixel noise sigma");

  // train
  auto* train = app.add_subcommand("train", "train from a run config");
  std::string train_config, ablation;
  train->add_option("config", train_config, "run config file")->required();
  train->add_option("--ablation", ablation, "none|coswin|cfilter|both");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_config, eval_ckpt, eval_data, eval_split = "test", eval_name = "model";
  eval->add_option("--config", eval_config, "run config file")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--split", eval_split, "split to evaluate (train|val|test)");
  eval->add_option("--name", eval_name, "model name for the report");

  // infer
  auto* infer = app.add_subcommand("infer", "run inference on one image");
  std::string inf_config, inf_ckpt, inf_image, inf_out = "out";
  infer->add_option("--config", inf_config, "run config file")->required();
  infer->add_option("--checkpoint", inf_ckpt, "checkpoint file")->required();
  infer->add_option("--image", inf_image, "input image")->required();
  infer->add_option("--out", inf_out, "output prefix (writes <out>_prob.png, <out>_mask.png)");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  uint64_t gc_seed = 0;
  bool gc_corrupt = false;
  gc->add_option("--seed", gc_seed, "suite seed");
  gc->add_flag("--corrupt-tanh", gc_corrupt,
               "test fixture: corrupt the tanh backward to exercise failure reporting");

  // ablate
  auto* ab = app.add_subcommand("ablate", "run the four ablation configs over several seeds");
  std::string ab_config, ab_data, ab_out = "runs/ablation";
  int64_t ab_seeds = 3;
  ab->add_option("--config", ab_config, "base run config (optional)");
  ab->add_option("--data", ab_data, "dataset directory");
  ab->add_option("--out", ab_out, "output directory");
  ab->add_option("--seeds", ab_seeds, "number of seeds per config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(count, size, synth_seed, out_dir, force, knobs);
    if (train->parsed()) return cmd_train(train_config, ablation);
    if (eval->parsed()) return cmd_eval(eval_config, eval_ckpt, eval_data, eval_split, eval_name);
    if (infer->parsed()) return cmd_infer(inf_config, inf_ckpt, inf_image, inf_out);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_corrupt);
    if (ab->parsed()) return cmd_ablate(ab_config, ab_data, ab_out, ab_seeds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
