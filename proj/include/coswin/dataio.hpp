#pragma once

#include <string>
#include <utility>
#include <vector>

#include "coswin/mask.hpp"
#include "coswin/rng.hpp"

namespace coswin {

struct MaskNotBinaryError : DomainError {
  using DomainError::DomainError;
};
struct SizeMismatchError : ShapeError {
  using ShapeError::ShapeError;
};

// One image tile with its road mask. Image values live in [0,1] and are
// 8-bit quantized so PNG roundtrips are lossless.
struct Sample {
  std::string id;
  std::string split;  // train | val | test
  int64_t h = 0, w = 0;
  std::vector<float> image;  // [3,h,w] planar RGB
  BinaryMask mask;           // shape {h,w}
};

struct SynthConfig {
  int64_t tile = 64;
  int64_t roads_min = 1, roads_max = 3;
  int64_t width_min = 4, width_max = 7;      // full road width in pixels
  double curvature = 0.25;                   // max per-step heading change, radians
  int64_t occl_min = 0, occl_max = 3;        // occluder patches per tile
  int64_t occl_size_min = 4, occl_size_max = 9;
  double noise_sigma = 0.03;
  uint64_t seed = 0;
};

struct SynthDebug {
  std::vector<std::vector<std::pair<double, double>>> polylines;  // (y,x) points
  std::vector<double> widths;                                     // per polyline
  std::vector<float> clean_image;                                 // occluders disabled
};

std::string split_for_index(int64_t index);  // index mod 10: 0-7 train, 8 val, 9 test

Sample synth_sample(const SynthConfig& cfg, int64_t index, SynthDebug* dbg = nullptr);

// --- image files ------------------------------------------------------------

Sample load_image_pair(const std::string& image_path, const std::string& mask_path);
// Image alone (for inference); returns [3,h,w] planar RGB in [0,1].
std::vector<float> load_image_rgb(const std::string& path, int64_t& h, int64_t& w);
void save_sample_pngs(const Sample& s, const std::string& image_path,
                      const std::string& mask_path);
void write_gray_png(const std::string& path, int64_t h, int64_t w,
                    const std::vector<uint8_t>& gray);

// --- tiling -----------------------------------------------------------------

// Raster-order tile origins; the last row/column is taken flush with the
// image edge, so coverage is complete even when stride does not divide.
std::vector<int64_t> tile_positions(int64_t extent, int64_t size, int64_t stride);
std::vector<Sample> tile_sample(const Sample& s, int64_t size, int64_t stride);

// --- manifest ---------------------------------------------------------------

struct ManifestEntry {
  std::string id, split, sha_image, sha_mask;
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_file(const std::string& path);

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);
std::string manifest_hash(const std::vector<ManifestEntry>& entries);

// Writes count PNG pairs plus manifest.tsv under dir (images/, masks/).
std::vector<ManifestEntry> write_synth_dataset(const SynthConfig& cfg, int64_t count,
                                               const std::string& dir);
// Loads samples listed in dir/manifest.tsv; empty split filter loads all.
std::vector<Sample> load_dataset(const std::string& dir, const std::string& split = "");

}  // namespace coswin
