#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "coswin/common.hpp"

namespace coswin {

inline uint64_t next_node_seq() {
  static std::atomic<uint64_t> seq{1};
  return seq.fetch_add(1, std::memory_order_relaxed);
}

// One tape entry. The tape is implicit: nodes carry a creation sequence
// number and backward() replays reachable nodes in reverse order.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on demand, same length as value
  bool requires_grad = false;
  uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // adds into parents' grad

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(Shape shape, T v, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(static_cast<size_t>(numel(shape)), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    n->seq = next_node_seq();
    return Tensor(n);
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    check(numel(shape) == static_cast<int64_t>(data.size()),
          "tensor data length does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    n->seq = next_node_seq();
    return Tensor(n);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t rank() const { return static_cast<int64_t>(node_->shape.size()); }
  int64_t dim(int64_t i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(node_->value.size()); }

  std::vector<T>& data() { return node_->value; }
  const std::vector<T>& data() const { return node_->value; }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  T item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  bool all_finite() const {
    for (T v : node_->value)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  // Reverse-mode sweep from a scalar. Gradients accumulate (+=) into every
  // requires_grad node reachable from this one.
  void backward() const {
    if (size() != 1) throw ContractError("backward() requires a scalar loss, got " + shape_str(shape()));
    if (!node_->requires_grad) return;

    std::vector<Node<T>*> order;
    std::vector<Node<T>*> stack{node_.get()};
    // Mark visited via a sorted set of pointers.
    std::vector<Node<T>*> seen;
    auto visit = [&](Node<T>* p) {
      auto it = std::lower_bound(seen.begin(), seen.end(), p);
      if (it != seen.end() && *it == p) return false;
      seen.insert(it, p);
      return true;
    };
    visit(node_.get());
    while (!stack.empty()) {
      Node<T>* n = stack.back();
      stack.pop_back();
      order.push_back(n);
      for (auto& p : n->parents)
        if (p->requires_grad && visit(p.get())) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](Node<T>* a, Node<T>* b) { return a->seq > b->seq; });

    // Interior activations get fresh gradient buffers each sweep; only leaf
    // tensors (no backprop rule) accumulate across repeated backward calls.
    for (Node<T>* n : order)
      if (n->backprop) n->grad.assign(n->value.size(), T(0));
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (Node<T>* n : order)
      if (n->backprop) n->backprop(*n);
  }

  std::shared_ptr<Node<T>>& node() { return node_; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Builds an op node: value computed by the caller, backward rule attached.
template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value,
                  std::initializer_list<Tensor<T>> parents,
                  std::function<void(Node<T>&)> backprop) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto& p : parents) {
    n->parents.push_back(p.node());
    n->requires_grad = n->requires_grad || p.requires_grad();
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  n->seq = next_node_seq();
  return Tensor<T>(n);
}

}  // namespace coswin
