// Tensor core: elementwise ops, matmul, reductions, and the reverse-mode tape.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "coswin/gradcheck.hpp"
#include "coswin/ops.hpp"

using namespace coswin;

TEST_CASE("elementwise fixed points") {
  auto x = Tensor<double>::scalar(0.0);
  CHECK(tanh_op(x).item() == doctest::Approx(0.0));
  CHECK(sigmoid(x).item() == doctest::Approx(0.5));
}

TEST_CASE("tanh saturation: value and gradient at x = 50") {
  auto x = Tensor<double>::scalar(50.0, /*requires_grad=*/true);
  Tensor<double> y = tanh_op(x);
  CHECK(y.item() > 1.0 - 1e-9);
  CHECK(y.item() <= 1.0);
  y.backward();
  CHECK(std::abs(x.grad()[0]) < 1e-6);
}

TEST_CASE("log of non-positive input is a domain error") {
  CHECK_THROWS_AS(log_op(Tensor<double>::scalar(0.0)), DomainError);
  CHECK_THROWS_AS(log_op(Tensor<double>::scalar(-1.0)), DomainError);
}

TEST_CASE("broadcast rules") {
  auto a = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor<double>::from({2, 1}, {10, 20});
  Tensor<double> y = add(a, b);
  CHECK(y.data() == std::vector<double>{11, 12, 13, 24, 25, 26});
  auto bad = Tensor<double>::from({3, 1}, {1, 2, 3});
  CHECK_THROWS_AS(add(a, bad), ShapeError);
}

TEST_CASE("broadcast gradient shape equals leaf shape") {
  auto a = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  auto b = Tensor<double>::from({2, 1}, {10, 20}, true);
  sum_all(mul(a, b)).backward();
  CHECK(a.grad().size() == 6);
  CHECK(b.grad().size() == 2);
  // d/db[0] = sum of a row 0
  CHECK(b.grad()[0] == doctest::Approx(1 + 2 + 3));
  CHECK(b.grad()[1] == doctest::Approx(4 + 5 + 6));
}

TEST_CASE("matmul: identity passthrough") {
  auto eye = Tensor<double>::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto m = Tensor<double>::from({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(matmul(eye, m).data() == m.data());
}

TEST_CASE("matmul: hand arithmetic oracle") {
  // [[1,2],[3,4]] x [[0],[1]] = [[2],[4]]
  auto a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor<double>::from({2, 1}, {0, 1});
  CHECK(matmul(a, b).data() == std::vector<double>{2, 4});
}

TEST_CASE("matmul: inner-dimension mismatch") {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({4, 2});
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul gradcheck 4x5 * 5x3, f64, step 1e-4") {
  Rng rng(7, 1);
  auto mk = [&](Shape s) {
    std::vector<double> v(static_cast<size_t>(numel(s)));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor<double>::from(s, std::move(v), true);
  };
  Tensor<double> a = mk({4, 5}), b = mk({5, 3});
  auto rep = gradcheck({{"a", a}, {"b", b}},
                       [a, b] { return sum_all(mul(matmul(a, b), matmul(a, b))); }, 1e-4);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("reduce: mean of a constant tensor is the constant") {
  auto x = Tensor<double>::filled({3, 4}, 2.5);
  Tensor<double> m = reduce(x, ReduceKind::Mean, 1);
  for (double v : m.data()) CHECK(v == doctest::Approx(2.5));
}

TEST_CASE("reduce max: first-argmax tie rule") {
  auto x = Tensor<double>::from({4}, {1, 5, 5, 2}, true);
  Tensor<double> m = reduce(x, ReduceKind::Max, 0);
  CHECK(m.item() == 5);
  sum_all(m).backward();
  CHECK(x.grad() == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("reduce max: exhaustive tie enumeration on small inputs") {
  // Every 0/1 pattern of length 4: gradient must land on the lowest argmax.
  for (int pat = 1; pat < 16; ++pat) {
    std::vector<double> v(4);
    int first = -1;
    for (int i = 0; i < 4; ++i) {
      v[i] = (pat >> i) & 1;
      if (first < 0 && v[i] == 1.0) first = i;
    }
    auto x = Tensor<double>::from({4}, std::move(v), true);
    sum_all(reduce(x, ReduceKind::Max, 0)).backward();
    for (int i = 0; i < 4; ++i)
      CHECK(x.grad()[i] == (i == first ? 1.0 : 0.0));
  }
}

TEST_CASE("reduce sum backward broadcasts ones") {
  auto x = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  sum_all(reduce(x, ReduceKind::Sum, 0)).backward();
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("reduce over empty axis is a domain error") {
  auto x = Tensor<double>::zeros({2, 0});
  CHECK_THROWS_AS(reduce(x, ReduceKind::Sum, 1), DomainError);
}

TEST_CASE("backward: sum gives all-ones; half sum of squares gives x") {
  auto x = Tensor<double>::from({3}, {1.5, -2.0, 0.25}, true);
  sum_all(x).backward();
  CHECK(x.grad() == std::vector<double>{1, 1, 1});

  auto y = Tensor<double>::from({3}, {1.5, -2.0, 0.25}, true);
  scale(sum_all(mul(y, y)), 0.5).backward();
  CHECK(y.grad()[0] == doctest::Approx(1.5));
  CHECK(y.grad()[1] == doctest::Approx(-2.0));
  CHECK(y.grad()[2] == doctest::Approx(0.25));
}

TEST_CASE("backward on a non-scalar is a contract error") {
  auto x = Tensor<double>::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(add(x, x).backward(), ContractError);
}

TEST_CASE("gradients accumulate across backward calls") {
  auto x = Tensor<double>::from({2}, {3, 4}, true);
  Tensor<double> loss = sum_all(x);
  loss.backward();
  loss.backward();
  CHECK(x.grad() == std::vector<double>{2, 2});
  x.zero_grad();
  loss.backward();
  CHECK(x.grad() == std::vector<double>{1, 1});
}

TEST_CASE("forward determinism: identical inputs give bit-identical outputs") {
  Rng rng(11, 2);
  std::vector<double> v(24);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  auto a = Tensor<double>::from({4, 6}, v);
  auto b = Tensor<double>::from({4, 6}, v);
  Tensor<double> y1 = softmax_lastdim(gelu(a));
  Tensor<double> y2 = softmax_lastdim(gelu(b));
  CHECK(y1.data() == y2.data());
}

TEST_CASE("elementwise chain gradcheck < 1e-6") {
  Rng rng(3, 4);
  std::vector<double> v(12);
  for (auto& x : v) x = rng.uniform(0.3, 1.5);
  auto x = Tensor<double>::from({3, 4}, std::move(v), true);
  auto rep = gradcheck({{"x", x}}, [x] {
    return sum_all(mul(tanh_op(x), add(sigmoid(x), mul(gelu(x), log_op(x)))));
  });
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("softmax rows sum to one and backward is consistent") {
  Rng rng(5, 6);
  std::vector<double> v(20);
  for (auto& x : v) x = rng.uniform(-3.0, 3.0);
  auto x = Tensor<double>::from({4, 5}, v, true);
  Tensor<double> y = softmax_lastdim(x);
  for (int r = 0; r < 4; ++r) {
    double s = 0;
    for (int c = 0; c < 5; ++c) s += y.data()[r * 5 + c];
    CHECK(s == doctest::Approx(1.0));
  }
  // Row sums are constant 1, so the gradient of their sum is zero.
  sum_all(y).backward();
  for (double g : x.grad()) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("permute/reshape/concat/slice round trips") {
  Rng rng(9, 1);
  std::vector<double> v(24);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  auto x = Tensor<double>::from({2, 3, 4}, v, true);
  Tensor<double> p = permute(permute(x, {2, 0, 1}), {1, 2, 0});
  CHECK(p.data() == x.data());
  Tensor<double> back = reshape(reshape(x, {24}), {2, 3, 4});
  CHECK(back.data() == x.data());
  Tensor<double> c = concat<double>({slice(x, 1, 0, 1), slice(x, 1, 1, 2)}, 1);
  CHECK(c.data() == x.data());
  sum_all(c).backward();
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("roll_nhwc is a torus shift with exact inverse") {
  Rng rng(13, 1);
  std::vector<double> v(2 * 4 * 4 * 3);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  auto x = Tensor<double>::from({2, 4, 4, 3}, v, true);
  Tensor<double> r = roll_nhwc(x, 2, 1);
  // out(h,w) = in((h+2)%4, (w+1)%4)
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t h = 0; h < 4; ++h)
      for (int64_t w = 0; w < 4; ++w)
        for (int64_t c = 0; c < 3; ++c)
          CHECK(r.data()[((n * 4 + h) * 4 + w) * 3 + c] ==
                x.data()[((n * 4 + (h + 2) % 4) * 4 + (w + 1) % 4) * 3 + c]);
  Tensor<double> back = roll_nhwc(r, -2, -1);
  CHECK(back.data() == x.data());
}
