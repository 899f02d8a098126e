#pragma once

#include <string>

#include "coswin/dataio.hpp"
#include "coswin/roadnet.hpp"

namespace coswin {

// Everything needed to reproduce a run. Serialized into the run directory
// next to every checkpoint.
struct RunConfig {
  NetworkConfig net;

  double alpha = 1.5;  // WBCE positive-class factor

  double lr = 0.01;
  double momentum = 0.9;
  double poly_power = 0.9;
  int64_t batch = 4;
  int64_t epochs = 30;

  std::string data_dir;
  bool augment = false;

  SynthConfig synth;
  int64_t synth_count = 250;

  uint64_t seed = 0;
  std::string out_dir = "runs/default";
  double threshold = 0.5;
  double target_val_iou = -1.0;  // >0: stop early once reached
};

std::string fusion_name(FusionMode m);
FusionMode fusion_from_name(const std::string& s);

// key = value text, '#' comments, dotted keys. Unknown keys are errors.
RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);
void save_run_config(const RunConfig& cfg, const std::string& path);

}  // namespace coswin
