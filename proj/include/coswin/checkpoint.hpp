#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "coswin/layers.hpp"
#include "coswin/sgd.hpp"

namespace coswin {

struct CkptFormatError : IoError {
  using IoError::IoError;
};
struct CkptCrcError : IoError {
  using IoError::IoError;
};
struct CkptMismatchError : ConfigError {
  using ConfigError::ConfigError;
};

// Self-describing tensor record. dtype: 0 = f32, 1 = f64.
struct TensorBlob {
  std::string name;
  uint8_t dtype = 0;
  Shape shape;
  std::vector<uint8_t> raw;  // little-endian scalars
};

uint64_t crc64(const uint8_t* data, size_t len, uint64_t crc = 0);

// Layout: magic "CSWN", u16 version=1, u32 tensor count; per tensor u16 name
// length, name bytes, u8 dtype, u8 rank, rank x u32 extents, raw data;
// trailing u64 CRC-64/ECMA-182 of all preceding bytes.
void save_checkpoint_file(const std::string& path, const std::vector<TensorBlob>& blobs);
std::vector<TensorBlob> load_checkpoint_file(const std::string& path);

template <typename T>
constexpr uint8_t dtype_code() {
  return std::is_same_v<T, float> ? 0 : 1;
}

template <typename T>
TensorBlob to_blob(const std::string& name, const Shape& shape, const std::vector<T>& data) {
  TensorBlob b;
  b.name = name;
  b.dtype = dtype_code<T>();
  b.shape = shape;
  b.raw.resize(data.size() * sizeof(T));
  std::memcpy(b.raw.data(), data.data(), b.raw.size());
  return b;
}

template <typename T>
std::vector<T> blob_data(const TensorBlob& b) {
  if (b.dtype != dtype_code<T>())
    throw CkptMismatchError("tensor '" + b.name + "' has dtype code " +
                            std::to_string(b.dtype) + ", expected " +
                            std::to_string(dtype_code<T>()));
  std::vector<T> out(b.raw.size() / sizeof(T));
  std::memcpy(out.data(), b.raw.data(), b.raw.size());
  return out;
}

// Params, buffers, and optimizer momenta (as "optim.m.<param name>").
template <typename T>
std::vector<TensorBlob> model_blobs(ParamRegistry<T>& reg, Sgd<T>* opt = nullptr) {
  std::vector<TensorBlob> blobs;
  for (auto& p : reg.params()) blobs.push_back(to_blob(p.name, p.tensor.shape(), p.tensor.data()));
  for (auto& b : reg.buffers()) blobs.push_back(to_blob(b.name, b.tensor.shape(), b.tensor.data()));
  if (opt) {
    auto& params = reg.params();
    for (size_t i = 0; i < params.size(); ++i)
      blobs.push_back(to_blob("optim.m." + params[i].name,
                              params[i].tensor.shape(), opt->velocity()[i]));
  }
  return blobs;
}

template <typename T>
void save_model(const std::string& path, ParamRegistry<T>& reg, Sgd<T>* opt = nullptr) {
  save_checkpoint_file(path, model_blobs(reg, opt));
}

// Strict load: every registry tensor must be present with identical name,
// shape, and dtype; unknown file tensors are rejected. Errors name the
// offending tensor.
template <typename T>
void load_model(const std::string& path, ParamRegistry<T>& reg, Sgd<T>* opt = nullptr) {
  auto blobs = load_checkpoint_file(path);
  std::map<std::string, const TensorBlob*> by_name;
  for (auto& b : blobs) by_name[b.name] = &b;

  auto take = [&](const std::string& name, const Shape& shape, std::vector<T>& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw CkptMismatchError("checkpoint is missing tensor '" + name + "'");
    const TensorBlob* b = it->second;
    if (b->shape != shape)
      throw CkptMismatchError("tensor '" + name + "' shape mismatch: checkpoint " +
                              shape_str(b->shape) + " vs model " + shape_str(shape));
    dst = blob_data<T>(*b);
    by_name.erase(it);
  };

  for (auto& p : reg.params()) take(p.name, p.tensor.shape(), p.tensor.data());
  for (auto& b : reg.buffers()) take(b.name, b.tensor.shape(), b.tensor.data());
  if (opt) {
    auto& params = reg.params();
    for (size_t i = 0; i < params.size(); ++i)
      take("optim.m." + params[i].name, params[i].tensor.shape(), opt->velocity()[i]);
  } else {
    // A checkpoint with momenta may be loaded without an optimizer.
    for (auto it = by_name.begin(); it != by_name.end();)
      it = (it->first.rfind("optim.m.", 0) == 0) ? by_name.erase(it) : std::next(it);
  }
  if (!by_name.empty())
    throw CkptMismatchError("checkpoint contains unknown tensor '" + by_name.begin()->first + "'");
}

}  // namespace coswin
