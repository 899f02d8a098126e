#pragma once

#include <map>
#include <string>
#include <vector>

#include "coswin/conv.hpp"
#include "coswin/norm.hpp"
#include "coswin/rng.hpp"

namespace coswin {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> tensor;  // requires_grad = true
  bool decay = true; // participates in the L2 penalty
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T> tensor;  // requires_grad = false (running stats etc.)
};

// Owns every learnable tensor of a network, keyed by dotted-path name.
// Names are unique and define checkpoint identity.
template <typename T>
class ParamRegistry {
 public:
  explicit ParamRegistry(uint64_t init_seed = 0) : init_seed_(init_seed) {}

  Tensor<T> add_param(const std::string& name, Tensor<T> t, bool decay) {
    if (index_.count(name) || buffer_index_.count(name))
      throw ConfigError("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back({name, t, decay});
    return t;
  }

  Tensor<T> add_buffer(const std::string& name, Tensor<T> t) {
    if (index_.count(name) || buffer_index_.count(name))
      throw ConfigError("duplicate buffer name: " + name);
    t.set_requires_grad(false);
    buffer_index_[name] = buffers_.size();
    buffers_.push_back({name, t});
    return t;
  }

  // Deterministic init streams: keyed by parameter name, not creation order.
  Rng rng_for(const std::string& name) const {
    uint64_t h = 1469598103934665603ull;
    for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
    return Rng(init_seed_, h);
  }

  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  std::vector<NamedBuffer<T>>& buffers() { return buffers_; }
  const std::vector<NamedBuffer<T>>& buffers() const { return buffers_; }

  Param<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  std::vector<std::string> sorted_names() const {
    std::vector<std::string> out;
    for (const auto& p : params_) out.push_back(p.name);
    std::sort(out.begin(), out.end());
    return out;
  }

  int64_t total_scalars() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  uint64_t init_seed_;
  std::vector<Param<T>> params_;
  std::vector<NamedBuffer<T>> buffers_;
  std::map<std::string, size_t> index_;
  std::map<std::string, size_t> buffer_index_;
};

template <typename T>
Tensor<T> kaiming_uniform(ParamRegistry<T>& reg, const std::string& name, Shape shape,
                          int64_t fan_in) {
  Rng rng = reg.rng_for(name);
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> data(static_cast<size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from(std::move(shape), std::move(data));
}

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamRegistry<T>& reg, const std::string& prefix, int64_t cin, int64_t cout,
         int64_t k, int64_t stride, int64_t pad, bool bias = true)
      : stride_(stride), pad_(pad), has_bias_(bias) {
    weight_ = reg.add_param(prefix + ".weight",
                            kaiming_uniform(reg, prefix + ".weight", {cout, cin, k, k},
                                            cin * k * k),
                            /*decay=*/true);
    if (bias)
      bias_ = reg.add_param(prefix + ".bias", Tensor<T>::zeros({cout}), /*decay=*/false);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv2d(x, weight_, has_bias_ ? &bias_ : nullptr, stride_, pad_);
  }

  Tensor<T> weight_;
  Tensor<T> bias_;

 private:
  int64_t stride_ = 1, pad_ = 0;
  bool has_bias_ = true;
};

template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamRegistry<T>& reg, const std::string& prefix, int64_t cin,
                  int64_t cout, int64_t k, int64_t stride)
      : stride_(stride) {
    weight_ = reg.add_param(prefix + ".weight",
                            kaiming_uniform(reg, prefix + ".weight", {cin, cout, k, k},
                                            cin * k * k),
                            /*decay=*/true);
    bias_ = reg.add_param(prefix + ".bias", Tensor<T>::zeros({cout}), /*decay=*/false);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv_transpose2d(x, weight_, &bias_, stride_);
  }

  Tensor<T> weight_;
  Tensor<T> bias_;

 private:
  int64_t stride_ = 2;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParamRegistry<T>& reg, const std::string& prefix, int64_t c,
              T momentum = T(0.1), T eps = T(1e-5))
      : momentum_(momentum), eps_(eps) {
    gamma_ = reg.add_param(prefix + ".gamma", Tensor<T>::filled({c}, T(1)), /*decay=*/false);
    beta_ = reg.add_param(prefix + ".beta", Tensor<T>::zeros({c}), /*decay=*/false);
    running_mean_ = reg.add_buffer(prefix + ".running_mean", Tensor<T>::zeros({c}));
    running_var_ = reg.add_buffer(prefix + ".running_var", Tensor<T>::filled({c}, T(1)));
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    std::vector<T> mu, var;
    Tensor<T> y = batch_norm2d(x, gamma_, beta_, running_mean_.data(), running_var_.data(),
                               train, eps_, &mu, &var);
    if (train) {
      int64_t m = x.dim(0) * x.dim(2) * x.dim(3);
      T unbias = (m > 1) ? static_cast<T>(m) / static_cast<T>(m - 1) : T(1);
      auto& rm = running_mean_.data();
      auto& rv = running_var_.data();
      for (size_t c = 0; c < rm.size(); ++c) {
        rm[c] = (T(1) - momentum_) * rm[c] + momentum_ * mu[c];
        rv[c] = (T(1) - momentum_) * rv[c] + momentum_ * var[c] * unbias;
      }
    }
    return y;
  }

  Tensor<T> gamma_, beta_, running_mean_, running_var_;

 private:
  T momentum_ = T(0.1), eps_ = T(1e-5);
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamRegistry<T>& reg, const std::string& prefix, int64_t c, T eps = T(1e-5))
      : eps_(eps) {
    gamma_ = reg.add_param(prefix + ".gamma", Tensor<T>::filled({c}, T(1)), /*decay=*/false);
    beta_ = reg.add_param(prefix + ".beta", Tensor<T>::zeros({c}), /*decay=*/false);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma_, beta_, eps_); }

  Tensor<T> gamma_, beta_;

 private:
  T eps_ = T(1e-5);
};

// Dense layer over the last dimension of [*, in] inputs.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamRegistry<T>& reg, const std::string& prefix, int64_t in, int64_t out,
         bool bias = true)
      : in_(in), out_(out), has_bias_(bias) {
    weight_ = reg.add_param(prefix + ".weight",
                            kaiming_uniform(reg, prefix + ".weight", {in, out}, in),
                            /*decay=*/true);
    if (bias)
      bias_ = reg.add_param(prefix + ".bias", Tensor<T>::zeros({1, out}), /*decay=*/false);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Shape s = x.shape();
    check(s.back() == in_, "linear input width mismatch");
    Tensor<T> flat = reshape(x, {x.size() / in_, in_});
    Tensor<T> y = matmul(flat, weight_);
    if (has_bias_) y = add(y, bias_);
    Shape out_shape = s;
    out_shape.back() = out_;
    return reshape(y, out_shape);
  }

  Tensor<T> weight_, bias_;

 private:
  int64_t in_ = 0, out_ = 0;
  bool has_bias_ = true;
};

// Two 3x3 convs with BN and an identity (or projected) shortcut.
template <typename T>
class ResNetBasicBlock {
 public:
  ResNetBasicBlock() = default;
  ResNetBasicBlock(ParamRegistry<T>& reg, const std::string& prefix, int64_t cin,
                   int64_t cout, int64_t stride)
      : project_(stride != 1 || cin != cout) {
    conv1_ = Conv2d<T>(reg, prefix + ".conv1", cin, cout, 3, stride, 1, /*bias=*/false);
    bn1_ = BatchNorm2d<T>(reg, prefix + ".bn1", cout);
    conv2_ = Conv2d<T>(reg, prefix + ".conv2", cout, cout, 3, 1, 1, /*bias=*/false);
    bn2_ = BatchNorm2d<T>(reg, prefix + ".bn2", cout);
    if (project_) {
      proj_ = Conv2d<T>(reg, prefix + ".proj", cin, cout, 1, stride, 0, /*bias=*/false);
      bnp_ = BatchNorm2d<T>(reg, prefix + ".bnp", cout);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> h = relu(bn1_.forward(conv1_.forward(x), train));
    h = bn2_.forward(conv2_.forward(h), train);
    Tensor<T> sc = project_ ? bnp_.forward(proj_.forward(x), train) : x;
    return relu(add(h, sc));
  }

  Conv2d<T> conv1_, conv2_, proj_;
  BatchNorm2d<T> bn1_, bn2_, bnp_;

 private:
  bool project_ = false;
};

// Stride-2 transposed conv followed by two conv3x3-BN-ReLU refinements.
// The two halves are exposed separately so a skip merge can sit between them.
template <typename T>
class UpsampleBlock {
 public:
  UpsampleBlock() = default;
  UpsampleBlock(ParamRegistry<T>& reg, const std::string& prefix, int64_t cin, int64_t cout) {
    up_ = ConvTranspose2d<T>(reg, prefix + ".up", cin, cout, 2, 2);
    conv1_ = Conv2d<T>(reg, prefix + ".conv1", cout, cout, 3, 1, 1, /*bias=*/false);
    bn1_ = BatchNorm2d<T>(reg, prefix + ".bn1", cout);
    conv2_ = Conv2d<T>(reg, prefix + ".conv2", cout, cout, 3, 1, 1, /*bias=*/false);
    bn2_ = BatchNorm2d<T>(reg, prefix + ".bn2", cout);
  }

  Tensor<T> up(const Tensor<T>& x) const { return up_.forward(x); }

  Tensor<T> refine(const Tensor<T>& x, bool train) {
    Tensor<T> h = relu(bn1_.forward(conv1_.forward(x), train));
    return relu(bn2_.forward(conv2_.forward(h), train));
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) { return refine(up(x), train); }

  ConvTranspose2d<T> up_;
  Conv2d<T> conv1_, conv2_;
  BatchNorm2d<T> bn1_, bn2_;
};

}  // namespace coswin
