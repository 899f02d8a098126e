#include "coswin/dataio.hpp"

#include <openssl/evp.h>

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace coswin {

namespace {

constexpr uint64_t kGeomStream = 0x47454F4Dull;   // per-aspect RNG streams keep
constexpr uint64_t kTexStream = 0x54455854ull;    // geometry identical when
constexpr uint64_t kOcclStream = 0x4F43434Cull;   // occluders are disabled

uint64_t stream_key(uint64_t kind, int64_t index, int64_t attempt) {
  return Rng::mix(kind ^ Rng::mix(static_cast<uint64_t>(index) * 0x100000001B3ull + attempt));
}

float quantize8(double v) {
  v = std::min(1.0, std::max(0.0, v));
  int q = static_cast<int>(std::lround(v * 255.0));
  return static_cast<float>(q) / 255.0f;
}

struct RoadGeometry {
  std::vector<std::vector<std::pair<double, double>>> polylines;
  std::vector<double> widths;
  BinaryMask mask;
};

RoadGeometry draw_roads(const SynthConfig& cfg, Rng& rng) {
  int64_t S = cfg.tile;
  RoadGeometry geo;
  geo.mask = BinaryMask({S, S});
  int64_t nroads = rng.uniform_int(cfg.roads_min, cfg.roads_max);
  for (int64_t r = 0; r < nroads; ++r) {
    double width = static_cast<double>(rng.uniform_int(cfg.width_min, cfg.width_max));
    double radius = width / 2.0;

    // Start on a random border, heading inward with some slack.
    int side = static_cast<int>(rng.uniform_int(0, 3));
    double t = rng.uniform(0.0, static_cast<double>(S - 1));
    double y, x, heading;
    switch (side) {
      case 0: y = 0; x = t; heading = 1.5708; break;   // top, heading down
      case 1: y = S - 1; x = t; heading = -1.5708; break;
      case 2: y = t; x = 0; heading = 0.0; break;      // left, heading right
      default: y = t; x = S - 1; heading = 3.1416; break;
    }
    heading += rng.uniform(-0.6, 0.6);

    std::vector<std::pair<double, double>> line;
    const double step = 0.5;
    int64_t max_steps = 8 * S;
    for (int64_t k = 0; k < max_steps; ++k) {
      line.emplace_back(y, x);
      // Stamp a disk of the road half-width.
      int64_t lo_y = static_cast<int64_t>(std::floor(y - radius - 1));
      int64_t hi_y = static_cast<int64_t>(std::ceil(y + radius + 1));
      int64_t lo_x = static_cast<int64_t>(std::floor(x - radius - 1));
      int64_t hi_x = static_cast<int64_t>(std::ceil(x + radius + 1));
      for (int64_t py = std::max<int64_t>(0, lo_y); py <= std::min(S - 1, hi_y); ++py)
        for (int64_t px = std::max<int64_t>(0, lo_x); px <= std::min(S - 1, hi_x); ++px) {
          double dy = py - y, dx = px - x;
          if (dy * dy + dx * dx <= radius * radius) geo.mask.data[py * S + px] = 1;
        }
      heading += rng.uniform(-cfg.curvature, cfg.curvature) * step;
      y += step * std::sin(heading);
      x += step * std::cos(heading);
      if (y < -2 || y > S + 1 || x < -2 || x > S + 1) break;
    }
    geo.polylines.push_back(std::move(line));
    geo.widths.push_back(width);
  }
  return geo;
}

}  // namespace

std::string split_for_index(int64_t index) {
  int64_t m = index % 10;
  if (m < 8) return "train";
  return m == 8 ? "val" : "test";
}

Sample synth_sample(const SynthConfig& cfg, int64_t index, SynthDebug* dbg) {
  int64_t S = cfg.tile;
  for (int64_t attempt = 0;; ++attempt) {
    Rng geom(cfg.seed, stream_key(kGeomStream, index, attempt));
    RoadGeometry geo = draw_roads(cfg, geom);
    int64_t road_px = geo.mask.count_ones();
    double frac = static_cast<double>(road_px) / static_cast<double>(S * S);
    if (road_px == 0 || frac >= 0.5) continue;  // redraw: fraction must be in (0, 0.5)

    Rng tex(cfg.seed, stream_key(kTexStream, index, attempt));
    double bg[3] = {0.27 + tex.uniform(-0.05, 0.05), 0.42 + tex.uniform(-0.05, 0.05),
                    0.22 + tex.uniform(-0.05, 0.05)};
    double road[3] = {0.46 + tex.uniform(-0.05, 0.05), 0.46 + tex.uniform(-0.05, 0.05),
                      0.48 + tex.uniform(-0.05, 0.05)};
    std::vector<float> clean(static_cast<size_t>(3 * S * S));
    for (int64_t p = 0; p < S * S; ++p) {
      bool on_road = geo.mask.data[p] != 0;
      for (int c = 0; c < 3; ++c) {
        double v = (on_road ? road[c] : bg[c]) + tex.normal(0.0, cfg.noise_sigma);
        clean[c * S * S + p] = quantize8(v);
      }
    }

    // Occluders darken the image over road pixels; the mask keeps the road.
    std::vector<float> image = clean;
    Rng occ(cfg.seed, stream_key(kOcclStream, index, attempt));
    std::vector<int64_t> road_pixels;
    for (int64_t p = 0; p < S * S; ++p)
      if (geo.mask.data[p]) road_pixels.push_back(p);
    int64_t nocc = occ.uniform_int(cfg.occl_min, cfg.occl_max);
    for (int64_t o = 0; o < nocc && !road_pixels.empty(); ++o) {
      int64_t center = road_pixels[static_cast<size_t>(
          occ.uniform_int(0, static_cast<int64_t>(road_pixels.size()) - 1))];
      int64_t cy = center / S, cx = center % S;
      int64_t half = occ.uniform_int(cfg.occl_size_min, cfg.occl_size_max) / 2;
      double col[3] = {0.14 + occ.uniform(-0.04, 0.04), 0.24 + occ.uniform(-0.04, 0.04),
                       0.12 + occ.uniform(-0.04, 0.04)};
      for (int64_t py = std::max<int64_t>(0, cy - half); py <= std::min(S - 1, cy + half); ++py)
        for (int64_t px = std::max<int64_t>(0, cx - half); px <= std::min(S - 1, cx + half); ++px)
          for (int c = 0; c < 3; ++c)
            image[c * S * S + py * S + px] =
                quantize8(col[c] + occ.normal(0.0, cfg.noise_sigma));
    }

    Sample s;
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%06lld", static_cast<long long>(index));
    s.id = id;
    s.split = split_for_index(index);
    s.h = S;
    s.w = S;
    s.image = std::move(image);
    s.mask = std::move(geo.mask);
    if (dbg) {
      dbg->polylines = std::move(geo.polylines);
      dbg->widths = std::move(geo.widths);
      dbg->clean_image = std::move(clean);
    }
    return s;
  }
}

// --- image files ------------------------------------------------------------

Sample load_image_pair(const std::string& image_path, const std::string& mask_path) {
  cv::Mat img = cv::imread(image_path, cv::IMREAD_COLOR);
  if (img.empty()) throw IoError("cannot read image: " + image_path);
  {
    std::string low = image_path;
    std::transform(low.begin(), low.end(), low.begin(), ::tolower);
    if (low.size() > 4 && (low.rfind(".jpg") == low.size() - 4 || low.rfind(".jpeg") == low.size() - 5))
      std::cerr << "warning: lossy JPEG image accepted: " << image_path << "\n";
  }
  cv::Mat mk = cv::imread(mask_path, cv::IMREAD_UNCHANGED);
  if (mk.empty()) throw IoError("cannot read mask: " + mask_path);
  if (mk.channels() == 3 || mk.channels() == 4) {
    cv::Mat ch[4];
    cv::split(mk, ch);
    for (int c = 1; c < 3; ++c) {
      cv::Mat diff;
      cv::absdiff(ch[0], ch[c], diff);
      double mx;
      cv::minMaxLoc(diff, nullptr, &mx);
      if (mx > 10)
        throw MaskNotBinaryError("mask is not single-channel gray: " + mask_path);
    }
    mk = ch[0];
  }
  if (mk.depth() != CV_8U) throw MaskNotBinaryError("mask must be 8-bit: " + mask_path);
  if (img.rows != mk.rows || img.cols != mk.cols)
    throw SizeMismatchError("image/mask size mismatch: " + image_path);

  Sample s;
  s.h = img.rows;
  s.w = img.cols;
  s.image.resize(static_cast<size_t>(3 * s.h * s.w));
  for (int64_t y = 0; y < s.h; ++y)
    for (int64_t x = 0; x < s.w; ++x) {
      cv::Vec3b bgr = img.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x));
      s.image[0 * s.h * s.w + y * s.w + x] = bgr[2] / 255.0f;
      s.image[1 * s.h * s.w + y * s.w + x] = bgr[1] / 255.0f;
      s.image[2 * s.h * s.w + y * s.w + x] = bgr[0] / 255.0f;
    }
  s.mask = BinaryMask({s.h, s.w});
  for (int64_t y = 0; y < s.h; ++y)
    for (int64_t x = 0; x < s.w; ++x) {
      uint8_t v = mk.at<uint8_t>(static_cast<int>(y), static_cast<int>(x));
      if (v > 50 && v < 200)
        throw MaskNotBinaryError("mask value " + std::to_string(v) +
                                 " outside binary tolerance: " + mask_path);
      s.mask.data[y * s.w + x] = (v >= 128) ? 1 : 0;
    }
  return s;
}

std::vector<float> load_image_rgb(const std::string& path, int64_t& h, int64_t& w) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) throw IoError("cannot read image: " + path);
  h = img.rows;
  w = img.cols;
  std::vector<float> out(static_cast<size_t>(3 * h * w));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      cv::Vec3b bgr = img.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x));
      out[0 * h * w + y * w + x] = bgr[2] / 255.0f;
      out[1 * h * w + y * w + x] = bgr[1] / 255.0f;
      out[2 * h * w + y * w + x] = bgr[0] / 255.0f;
    }
  return out;
}

void save_sample_pngs(const Sample& s, const std::string& image_path,
                      const std::string& mask_path) {
  cv::Mat img(static_cast<int>(s.h), static_cast<int>(s.w), CV_8UC3);
  for (int64_t y = 0; y < s.h; ++y)
    for (int64_t x = 0; x < s.w; ++x) {
      auto at = [&](int c) {
        return static_cast<uint8_t>(
            std::lround(s.image[c * s.h * s.w + y * s.w + x] * 255.0f));
      };
      img.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x)) =
          cv::Vec3b(at(2), at(1), at(0));
    }
  cv::Mat mk(static_cast<int>(s.h), static_cast<int>(s.w), CV_8UC1);
  for (int64_t p = 0; p < s.h * s.w; ++p)
    mk.data[p] = s.mask.data[p] ? 255 : 0;
  if (!cv::imwrite(image_path, img)) throw IoError("cannot write " + image_path);
  if (!cv::imwrite(mask_path, mk)) throw IoError("cannot write " + mask_path);
}

void write_gray_png(const std::string& path, int64_t h, int64_t w,
                    const std::vector<uint8_t>& gray) {
  cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
  std::copy(gray.begin(), gray.end(), m.data);
  if (!cv::imwrite(path, m)) throw IoError("cannot write " + path);
}

// --- tiling -----------------------------------------------------------------

std::vector<int64_t> tile_positions(int64_t extent, int64_t size, int64_t stride) {
  check(size <= extent, "tile size exceeds image extent");
  std::vector<int64_t> pos;
  for (int64_t p = 0; p + size <= extent; p += stride) pos.push_back(p);
  if (pos.empty() || pos.back() + size < extent) pos.push_back(extent - size);
  return pos;
}

std::vector<Sample> tile_sample(const Sample& s, int64_t size, int64_t stride) {
  auto ys = tile_positions(s.h, size, stride);
  auto xs = tile_positions(s.w, size, stride);
  std::vector<Sample> tiles;
  for (int64_t y : ys)
    for (int64_t x : xs) {
      Sample t;
      t.id = s.id + "_y" + std::to_string(y) + "_x" + std::to_string(x);
      t.split = s.split;
      t.h = size;
      t.w = size;
      t.image.resize(static_cast<size_t>(3 * size * size));
      t.mask = BinaryMask({size, size});
      for (int c = 0; c < 3; ++c)
        for (int64_t r = 0; r < size; ++r)
          std::copy_n(s.image.begin() + c * s.h * s.w + (y + r) * s.w + x, size,
                      t.image.begin() + c * size * size + r * size);
      for (int64_t r = 0; r < size; ++r)
        std::copy_n(s.mask.data.begin() + (y + r) * s.w + x, size,
                    t.mask.data.begin() + r * size);
      tiles.push_back(std::move(t));
    }
  return tiles;
}

// --- manifest ---------------------------------------------------------------

std::string sha256_hex(const void* data, size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int dlen = 0;
  EVP_Digest(data, len, digest, &dlen, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < dlen; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read file for hashing: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes.data(), bytes.size());
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest: " + path);
  for (const auto& e : entries)
    f << e.id << '\t' << e.split << '\t' << e.sha_image << '\t' << e.sha_mask << '\n';
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read manifest: " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    ManifestEntry e;
    if (!std::getline(is, e.id, '\t') || !std::getline(is, e.split, '\t') ||
        !std::getline(is, e.sha_image, '\t') || !std::getline(is, e.sha_mask))
      throw IoError("malformed manifest line: " + line);
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string manifest_hash(const std::vector<ManifestEntry>& entries) {
  std::ostringstream os;
  for (const auto& e : entries)
    os << e.id << '\t' << e.split << '\t' << e.sha_image << '\t' << e.sha_mask << '\n';
  std::string s = os.str();
  return sha256_hex(s.data(), s.size());
}

std::vector<ManifestEntry> write_synth_dataset(const SynthConfig& cfg, int64_t count,
                                               const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  std::vector<ManifestEntry> entries;
  for (int64_t i = 0; i < count; ++i) {
    Sample s = synth_sample(cfg, i);
    std::string img = (fs::path(dir) / "images" / (s.id + ".png")).string();
    std::string msk = (fs::path(dir) / "masks" / (s.id + ".png")).string();
    save_sample_pngs(s, img, msk);
    entries.push_back({s.id, s.split, sha256_file(img), sha256_file(msk)});
  }
  write_manifest((fs::path(dir) / "manifest.tsv").string(), entries);
  return entries;
}

std::vector<Sample> load_dataset(const std::string& dir, const std::string& split) {
  auto entries = read_manifest((fs::path(dir) / "manifest.tsv").string());
  std::vector<Sample> out;
  for (const auto& e : entries) {
    if (!split.empty() && e.split != split) continue;
    std::string img = (fs::path(dir) / "images" / (e.id + ".png")).string();
    std::string msk = (fs::path(dir) / "masks" / (e.id + ".png")).string();
    Sample s = load_image_pair(img, msk);
    s.id = e.id;
    s.split = e.split;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace coswin
