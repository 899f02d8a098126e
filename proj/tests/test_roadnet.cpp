#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "coswin/checkpoint.hpp"
#include "coswin/loss.hpp"
#include "coswin/roadnet.hpp"

using namespace coswin;

namespace {

NetworkConfig tiny_cfg(bool use_coswin = true, bool use_cfilter = true) {
  NetworkConfig cfg;
  cfg.tile = 16;
  cfg.widths = {4, 8, 8};
  cfg.window = 2;
  cfg.heads = 2;
  cfg.res_blocks = 1;
  cfg.swin_blocks = 1;
  cfg.cfilter_kernel = 3;
  cfg.use_coswin = use_coswin;
  cfg.use_cfilter = use_cfilter;
  return cfg;
}

template <typename T>
Tensor<T> rand_tensor(Shape s, uint64_t seed, uint64_t stream, double lo = 0.0,
                      double hi = 1.0) {
  Rng rng(seed, stream);
  std::vector<T> d(static_cast<size_t>(numel(s)));
  for (auto& v : d) v = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>::from(std::move(s), std::move(d));
}

std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)),
                              std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("roadnet: output is [N,1,T,T] with probabilities strictly inside (0,1)") {
  RoadNet<float> net(tiny_cfg(), 3);
  auto x = rand_tensor<float>({2, 3, 16, 16}, 7, 1);
  auto p = net.forward(x, /*train=*/false);
  CHECK(p.shape() == Shape{2, 1, 16, 16});
  for (float v : p.data()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("roadnet: resolution symmetry holds at a second tile size") {
  NetworkConfig cfg = tiny_cfg();
  cfg.tile = 32;
  RoadNet<float> net(cfg, 4);
  auto x = rand_tensor<float>({1, 3, 32, 32}, 8, 1);
  CHECK(net.forward(x, false).shape() == Shape{1, 1, 32, 32});
}

TEST_CASE("roadnet: wrong input tile size raises a shape error") {
  RoadNet<float> net(tiny_cfg(), 5);
  auto x = rand_tensor<float>({1, 3, 32, 32}, 9, 1);
  CHECK_THROWS_AS(net.forward(x, false), ShapeError);
}

TEST_CASE("roadnet: ablation lattice is shape-compatible with differing parameter counts") {
  auto x = rand_tensor<float>({2, 3, 16, 16}, 10, 1);
  std::vector<size_t> counts;
  for (bool coswin : {false, true})
    for (bool cfilter : {false, true}) {
      RoadNet<float> net(tiny_cfg(coswin, cfilter), 6);
      auto p = net.forward(x, /*train=*/true);
      CHECK(p.shape() == Shape{2, 1, 16, 16});
      counts.push_back(net.parameter_registry().size());
    }
  CHECK(counts[0] < counts[3]);         // (none) has fewer tensors than (both)
  CHECK(counts[0] != counts[1]);        // cfilter adds params
  CHECK(counts[0] != counts[2]);        // coswin adds params
}

TEST_CASE("predict_mask: boundary and monotonicity rules") {
  auto p = Tensor<float>::filled({1, 1, 4, 4}, 0.9f);
  CHECK(predict_mask(p, 0.5).count_ones() == 16);

  auto q = Tensor<float>::filled({1, 1, 4, 4}, 0.5f);
  CHECK(predict_mask(q, 0.5).count_ones() == 16);  // >= convention: ties are road

  auto r = rand_tensor<float>({1, 1, 8, 8}, 11, 2);
  int64_t prev = 65;
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    int64_t ones = predict_mask(r, t).count_ones();
    CHECK(ones <= prev);
    prev = ones;
  }

  CHECK_THROWS_AS(predict_mask(p, 0.0), DomainError);
  CHECK_THROWS_AS(predict_mask(p, 1.0), DomainError);
}

TEST_CASE("roadnet: parameter registry is deterministic, sorted, duplicate-free") {
  RoadNet<float> a(tiny_cfg(), 12);
  RoadNet<float> b(tiny_cfg(), 12);
  auto na = a.parameter_registry();
  CHECK(na == b.parameter_registry());
  CHECK(std::is_sorted(na.begin(), na.end()));
  CHECK(std::adjacent_find(na.begin(), na.end()) == na.end());

  RoadNet<float> c(tiny_cfg(true, false), 12);
  for (const auto& n : c.parameter_registry())
    CHECK(n.rfind("cfilter.", 0) == std::string::npos);
}

TEST_CASE("roadnet: dead-parameter audit, every tensor gets gradient from one step") {
  RoadNet<double> net(tiny_cfg(), 13);
  auto x = rand_tensor<double>({2, 3, 16, 16}, 14, 1);
  Rng mr(15, 1);
  std::vector<double> md(2 * 1 * 16 * 16);
  for (auto& v : md) v = mr.uniform(0.0, 1.0) < 0.3 ? 1.0 : 0.0;
  auto target = Tensor<double>::from({2, 1, 16, 16}, std::move(md));

  auto pred = net.forward(x, /*train=*/true);
  wbce(pred, target, 1.5).backward();
  for (auto& p : net.registry().params()) {
    double norm = 0.0;
    for (double g : p.tensor.grad()) norm += g * g;
    INFO("parameter ", p.name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("checkpoint: save/load/save byte identity, reload forward equality, momenta") {
  const std::string p1 = "/tmp/coswin_test_a.ckpt";
  const std::string p2 = "/tmp/coswin_test_b.ckpt";

  RoadNet<float> net(tiny_cfg(), 21);
  Sgd<float> opt(net.registry(), 0.9f);
  auto x = rand_tensor<float>({2, 3, 16, 16}, 22, 1);
  auto target = Tensor<float>::filled({2, 1, 16, 16}, 0.0f);
  target.data()[5] = 1.0f;

  // One real training step so momenta are non-trivial.
  auto pred = net.forward(x, true);
  wbce(pred, target, 1.5f).backward();
  opt.step(0.01f);

  save_model(p1, net.registry(), &opt);
  auto before = net.forward(x, false);

  RoadNet<float> other(tiny_cfg(), 99);  // different init must be overwritten
  Sgd<float> opt2(other.registry(), 0.9f);
  load_model(p1, other.registry(), &opt2);
  auto after = other.forward(x, false);
  CHECK(after.data() == before.data());  // bit-exact forward after reload
  CHECK(opt2.velocity() == opt.velocity());

  save_model(p2, other.registry(), &opt2);
  CHECK(read_bytes(p1) == read_bytes(p2));  // byte-identical round trip

  // Loading without an optimizer skips optim.m.* silently.
  RoadNet<float> third(tiny_cfg(), 1);
  load_model(p1, third.registry());
  CHECK(third.forward(x, false).data() == before.data());

  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("checkpoint: CRC corruption and shape mismatch are rejected with names") {
  const std::string path = "/tmp/coswin_test_c.ckpt";
  RoadNet<float> net(tiny_cfg(), 31);
  save_model(path, net.registry());

  auto bytes = read_bytes(path);
  bytes[bytes.size() - 9] ^= 0x01;  // flip a bit in the last tensor's payload
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  RoadNet<float> victim(tiny_cfg(), 31);
  CHECK_THROWS_AS(load_model(path, victim.registry()), CkptCrcError);

  // Re-save intact, then load into a wider network: the error names a tensor.
  save_model(path, net.registry());
  NetworkConfig wide = tiny_cfg();
  wide.widths = {4, 8, 16};
  RoadNet<float> mismatched(wide, 31);
  try {
    load_model(path, mismatched.registry());
    FAIL("expected CkptMismatchError");
  } catch (const CkptMismatchError& e) {
    CHECK(std::string(e.what()).find("'") != std::string::npos);
    CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
  }
  std::remove(path.c_str());
}
