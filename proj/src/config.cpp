#include "coswin/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace coswin {

std::string fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::Tanh: return "tanh";
    case FusionMode::BatchNorm: return "batchnorm";
    case FusionMode::None: return "none";
  }
  return "tanh";
}

FusionMode fusion_from_name(const std::string& s) {
  if (s == "tanh") return FusionMode::Tanh;
  if (s == "batchnorm") return FusionMode::BatchNorm;
  if (s == "none") return FusionMode::None;
  throw ConfigError("unknown fusion mode: " + s);
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int64_t to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

std::vector<int64_t> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int64_t> out;
  std::istringstream is(v);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(to_int(key, trim(tok)));
  return out;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig c;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> keys = {
      {"net.tile", [&](auto& k, auto& v) { c.net.tile = to_int(k, v); }},
      {"net.widths", [&](auto& k, auto& v) { c.net.widths = to_int_list(k, v); }},
      {"net.window", [&](auto& k, auto& v) { c.net.window = to_int(k, v); }},
      {"net.heads", [&](auto& k, auto& v) { c.net.heads = to_int(k, v); }},
      {"net.res_blocks", [&](auto& k, auto& v) { c.net.res_blocks = to_int(k, v); }},
      {"net.swin_blocks", [&](auto& k, auto& v) { c.net.swin_blocks = to_int(k, v); }},
      {"net.cfilter_kernel", [&](auto& k, auto& v) { c.net.cfilter_kernel = to_int(k, v); }},
      {"net.fusion", [&](auto&, auto& v) { c.net.fusion = fusion_from_name(v); }},
      {"net.use_coswin", [&](auto& k, auto& v) { c.net.use_coswin = to_bool(k, v); }},
      {"net.use_cfilter", [&](auto& k, auto& v) { c.net.use_cfilter = to_bool(k, v); }},
      {"loss.alpha", [&](auto& k, auto& v) { c.alpha = to_double(k, v); }},
      {"optim.lr", [&](auto& k, auto& v) { c.lr = to_double(k, v); }},
      {"optim.momentum", [&](auto& k, auto& v) { c.momentum = to_double(k, v); }},
      {"optim.poly_power", [&](auto& k, auto& v) { c.poly_power = to_double(k, v); }},
      {"optim.batch", [&](auto& k, auto& v) { c.batch = to_int(k, v); }},
      {"optim.epochs", [&](auto& k, auto& v) { c.epochs = to_int(k, v); }},
      {"data.dir", [&](auto&, auto& v) { c.data_dir = v; }},
      {"data.augment", [&](auto& k, auto& v) { c.augment = to_bool(k, v); }},
      {"synth.tile", [&](auto& k, auto& v) { c.synth.tile = to_int(k, v); }},
      {"synth.count", [&](auto& k, auto& v) { c.synth_count = to_int(k, v); }},
      {"synth.roads_min", [&](auto& k, auto& v) { c.synth.roads_min = to_int(k, v); }},
      {"synth.roads_max", [&](auto& k, auto& v) { c.synth.roads_max = to_int(k, v); }},
      {"synth.width_min", [&](auto& k, auto& v) { c.synth.width_min = to_int(k, v); }},
      {"synth.width_max", [&](auto& k, auto& v) { c.synth.width_max = to_int(k, v); }},
      {"synth.curvature", [&](auto& k, auto& v) { c.synth.curvature = to_double(k, v); }},
      {"synth.occl_min", [&](auto& k, auto& v) { c.synth.occl_min = to_int(k, v); }},
      {"synth.occl_max", [&](auto& k, auto& v) { c.synth.occl_max = to_int(k, v); }},
      {"synth.occl_size_min", [&](auto& k, auto& v) { c.synth.occl_size_min = to_int(k, v); }},
      {"synth.occl_size_max", [&](auto& k, auto& v) { c.synth.occl_size_max = to_int(k, v); }},
      {"synth.noise_sigma", [&](auto& k, auto& v) { c.synth.noise_sigma = to_double(k, v); }},
      {"synth.seed", [&](auto& k, auto& v) { c.synth.seed = static_cast<uint64_t>(to_int(k, v)); }},
      {"train.seed", [&](auto& k, auto& v) { c.seed = static_cast<uint64_t>(to_int(k, v)); }},
      {"train.out_dir", [&](auto&, auto& v) { c.out_dir = v; }},
      {"train.threshold", [&](auto& k, auto& v) { c.threshold = to_double(k, v); }},
      {"train.target_val_iou", [&](auto& k, auto& v) { c.target_val_iou = to_double(k, v); }},
  };

  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    auto it = keys.find(key);
    if (it == keys.end())
      throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(lineno) + ")");
    it->second(key, val);
  }
  c.net.validate();
  if (c.alpha <= 0) throw ConfigError("loss.alpha must be positive");
  if (c.batch < 2) throw ConfigError("optim.batch must be at least 2 (batch norm)");
  if (!(c.threshold > 0 && c.threshold < 1)) throw ConfigError("train.threshold must be in (0,1)");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_run_config_text(text);
}

std::string serialize_run_config(const RunConfig& c) {
  std::ostringstream os;
  os << "net.tile = " << c.net.tile << "\n";
  os << "net.widths = " << c.net.widths[0] << "," << c.net.widths[1] << "," << c.net.widths[2] << "\n";
  os << "net.window = " << c.net.window << "\n";
  os << "net.heads = " << c.net.heads << "\n";
  os << "net.res_blocks = " << c.net.res_blocks << "\n";
  os << "net.swin_blocks = " << c.net.swin_blocks << "\n";
  os << "net.cfilter_kernel = " << c.net.cfilter_kernel << "\n";
  os << "net.fusion = " << fusion_name(c.net.fusion) << "\n";
  os << "net.use_coswin = " << (c.net.use_coswin ? "true" : "false") << "\n";
  os << "net.use_cfilter = " << (c.net.use_cfilter ? "true" : "false") << "\n";
  os << "loss.alpha = " << c.alpha << "\n";
  os << "optim.lr = " << c.lr << "\n";
  os << "optim.momentum = " << c.momentum << "\n";
  os << "optim.poly_power = " << c.poly_power << "\n";
  os << "optim.batch = " << c.batch << "\n";
  os << "optim.epochs = " << c.epochs << "\n";
  if (!c.data_dir.empty()) os << "data.dir = " << c.data_dir << "\n";
  os << "data.augment = " << (c.augment ? "true" : "false") << "\n";
  os << "synth.tile = " << c.synth.tile << "\n";
  os << "synth.count = " << c.synth_count << "\n";
  os << "synth.roads_min = " << c.synth.roads_min << "\n";
  os << "synth.roads_max = " << c.synth.roads_max << "\n";
  os << "synth.width_min = " << c.synth.width_min << "\n";
  os << "synth.width_max = " << c.synth.width_max << "\n";
  os << "synth.curvature = " << c.synth.curvature << "\n";
  os << "synth.occl_min = " << c.synth.occl_min << "\n";
  os << "synth.occl_max = " << c.synth.occl_max << "\n";
  os << "synth.occl_size_min = " << c.synth.occl_size_min << "\n";
  os << "synth.occl_size_max = " << c.synth.occl_size_max << "\n";
  os << "synth.noise_sigma = " << c.synth.noise_sigma << "\n";
  os << "synth.seed = " << c.synth.seed << "\n";
  os << "train.seed = " << c.seed << "\n";
  os << "train.out_dir = " << c.out_dir << "\n";
  os << "train.threshold = " << c.threshold << "\n";
  os << "train.target_val_iou = " << c.target_val_iou << "\n";
  return os.str();
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write config: " + path);
  f << serialize_run_config(cfg);
}

}  // namespace coswin
