#pragma once

// Dense NCHW tensors with a reverse-mode tape.
//
// Every operation result is a Node that remembers its inputs and a closure
// that pushes its gradient back into them. Nodes carry a per-thread sequence
// number in creation order; that order *is* the tape. backward() gathers
// the nodes reachable from the loss and replays them in reverse sequence
// order, so each node runs exactly once and accumulation order is fixed.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "c4net/errors.hpp"

namespace c4net {

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int> dims) : Shape(std::vector<int>(dims)) {}
  explicit Shape(const std::vector<int>& dims) {
    if (dims.empty() || dims.size() > 4) {
      throw ShapeError("tensor rank must be 1..4, got " + std::to_string(dims.size()));
    }
    for (int d : dims) {
      if (d <= 0) throw ShapeError("tensor extents must be positive");
    }
    rank_ = static_cast<int>(dims.size());
    std::copy(dims.begin(), dims.end(), dims_.begin());
  }

  int rank() const { return rank_; }
  int operator[](int i) const { return dims_[static_cast<std::size_t>(i)]; }

  std::size_t numel() const {
    std::size_t n = rank_ > 0 ? 1 : 0;
    for (int i = 0; i < rank_; ++i) n *= static_cast<std::size_t>(dims_[static_cast<std::size_t>(i)]);
    return n;
  }

  // Left-padded with ones to rank 4.
  std::array<int, 4> as4() const {
    std::array<int, 4> out{1, 1, 1, 1};
    for (int i = 0; i < rank_; ++i) out[static_cast<std::size_t>(4 - rank_ + i)] = dims_[static_cast<std::size_t>(i)];
    return out;
  }

  // Named accessors for rank-4 NCHW tensors.
  int n() const { return dims_[0]; }
  int c() const { return dims_[1]; }
  int h() const { return dims_[2]; }
  int w() const { return dims_[3]; }

  std::vector<int> dims() const { return {dims_.begin(), dims_.begin() + rank_}; }
  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < rank_; ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[static_cast<std::size_t>(i)]);
    }
    return s + ")";
  }

  friend bool operator==(const Shape& a, const Shape& b) {
    if (a.rank_ != b.rank_) return false;
    for (int i = 0; i < a.rank_; ++i) {
      if (a.dims_[static_cast<std::size_t>(i)] != b.dims_[static_cast<std::size_t>(i)]) return false;
    }
    return true;
  }

 private:
  std::array<int, 4> dims_{0, 0, 0, 0};
  int rank_ = 0;
};

namespace detail {
inline std::uint64_t next_sequence() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}
}  // namespace detail

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;

  Tensor(const Shape& shape, T fill) : node_(std::make_shared<Node<T>>()) {
    node_->shape = shape;
    node_->value.assign(shape.numel(), fill);
    node_->seq = detail::next_sequence();
  }

  Tensor(const Shape& shape, std::vector<T> values) : node_(std::make_shared<Node<T>>()) {
    if (values.size() != shape.numel()) {
      throw ShapeError("tensor " + shape.str() + " needs " + std::to_string(shape.numel()) +
                       " values, got " + std::to_string(values.size()));
    }
    node_->shape = shape;
    node_->value = std::move(values);
    node_->seq = detail::next_sequence();
  }

  static Tensor zeros(const Shape& shape) { return Tensor(shape, T(0)); }
  static Tensor ones(const Shape& shape) { return Tensor(shape, T(1)); }
  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  // Direct mutation is meant for leaves (parameters, inputs, BN buffers).
  std::span<T> data() { return node_->value; }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  T item() const {
    if (numel() != 1) throw ContractError("item() on a tensor with " + std::to_string(numel()) + " elements");
    return node_->value[0];
  }

  T at(int n, int c, int h, int w) const { return node_->value[offset(n, c, h, w)]; }
  T& at(int n, int c, int h, int w) { return node_->value[offset(n, c, h, w)]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  // Empty span until a backward pass has touched this tensor.
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  // Fresh leaf holding a copy of the values.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  Node<T>* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    const Shape& s = node_->shape;
    return ((static_cast<std::size_t>(n) * static_cast<std::size_t>(s.c()) + static_cast<std::size_t>(c)) *
                static_cast<std::size_t>(s.h()) +
            static_cast<std::size_t>(h)) *
               static_cast<std::size_t>(s.w()) +
           static_cast<std::size_t>(w);
  }

  NodePtr node_;
};

// Builds an operation result. The backward closure is kept only when some
// input participates in gradient computation.
template <typename T>
Tensor<T> make_result(const Shape& shape, std::vector<T> value, std::vector<typename Tensor<T>::NodePtr> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value = std::move(value);
  node->seq = detail::next_sequence();
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const auto& p) { return p->requires_grad; });
  if (any) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>::from_node(std::move(node));
}

// Reverse pass from a scalar. Leaves accumulate into their grad buffers;
// interior nodes release their closures after running.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a tensor that is not attached to a tape");
  }
  // Owning pointers: releasing a node's inputs below must not free nodes
  // that are still waiting for their turn.
  std::vector<std::shared_ptr<Node<T>>> order;
  std::unordered_set<const Node<T>*> seen;
  std::vector<std::shared_ptr<Node<T>>> todo{loss.node_ptr()};
  while (!todo.empty()) {
    auto n = std::move(todo.back());
    todo.pop_back();
    if (!seen.insert(n.get()).second) continue;
    for (const auto& in : n->inputs) {
      if (in->requires_grad) todo.push_back(in);
    }
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a->seq > b->seq; });
  loss.node()->ensure_grad()[0] += T(1);
  for (const auto& n : order) {
    if (n->backward_fn && !n->grad.empty()) {
      n->backward_fn(*n);
      n->backward_fn = nullptr;
      n->inputs.clear();
    }
  }
}

}  // namespace c4net
