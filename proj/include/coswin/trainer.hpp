#pragma once

#include <string>
#include <vector>

#include "coswin/checkpoint.hpp"
#include "coswin/config.hpp"
#include "coswin/dataio.hpp"
#include "coswin/loss.hpp"
#include "coswin/metrics.hpp"
#include "coswin/roadnet.hpp"
#include "coswin/sgd.hpp"

namespace coswin {

struct TrainAbortError : DomainError {
  using DomainError::DomainError;
};

// The uncertainty-weighting scalars live in the same registry as the network
// so they are trained, checkpointed, and audited like any other parameter.
template <typename T>
struct LossParams {
  Tensor<T> s1, s2;
};

template <typename T>
LossParams<T> attach_loss_params(ParamRegistry<T>& reg) {
  LossParams<T> lp;
  lp.s1 = reg.add_param("loss.s1", Tensor<T>::zeros({1}), /*decay=*/false);
  lp.s2 = reg.add_param("loss.s2", Tensor<T>::zeros({1}), /*decay=*/false);
  return lp;
}

// Samples -> network tensors. Image [N,3,T,T], target [N,1,T,T].
Tensor<float> batch_images(const std::vector<Sample>& samples, const std::vector<int64_t>& idx);
Tensor<float> batch_targets(const std::vector<Sample>& samples, const std::vector<int64_t>& idx);

// Dihedral-group augmentation (flips + 90-degree rotations), op in [0,8).
Sample augment_sample(const Sample& s, int op);

struct EpochLog {
  int64_t epoch = 0;
  double train_loss = 0.0;
  Scores val;
  double exp_neg_s1 = 1.0, exp_neg_s2 = 1.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val_iou = 0.0;
  int64_t best_epoch = 0;
  int64_t epochs_run = 0;
  std::string best_checkpoint, last_checkpoint;
};

// Tiled inference over an arbitrary image: tile-size strides with flush-edge
// placement; overlap pixels average the contributing tile probabilities.
// Returns a [h*w] probability map.
std::vector<float> infer_image(RoadNet<float>& net, const std::vector<float>& image,
                               int64_t h, int64_t w);

// Micro-averaged scores over a sample set (eval mode, no gradients kept).
Scores evaluate_model(RoadNet<float>& net, const std::vector<Sample>& samples,
                      double threshold, int64_t batch);

// Full training loop. Writes config.txt, log.csv, last.ckpt, best.ckpt into
// cfg.out_dir. NaN loss aborts with TrainAbortError; last.ckpt stays at the
// last finished epoch (or the initial state).
TrainResult train_model(const RunConfig& cfg, RoadNet<float>& net,
                        const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, bool quiet = false);

}  // namespace coswin
