// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mimt/error.hpp"

namespace mimt::numerics {

using Shape = std::vector<std::size_t>;
using TensorId = std::uint64_t;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// Live/peak bytes held by tensor buffers created on the current thread.
// Used as the portable peak-memory proxy of the training cost report.
class MemoryMeter {
 public:
  static MemoryMeter& local() {
    thread_local MemoryMeter meter;
    return meter;
  }
  void allocate(std::size_t bytes) {
    live_ += static_cast<std::int64_t>(bytes);
    peak_ = std::max(peak_, live_);
  }
  void release(std::size_t bytes) { live_ -= static_cast<std::int64_t>(bytes); }
  std::int64_t live() const { return live_; }
  std::int64_t peak() const { return peak_; }
  void reset_peak() { peak_ = live_; }

 private:
  std::int64_t live_ = 0;
  std::int64_t peak_ = 0;
};

class Tape;

namespace detail {

inline TensorId next_tensor_id() {
  static std::atomic<TensorId> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

struct Node {
  Node(Shape s, std::vector<double> v, bool rg)
      : id(next_tensor_id()), shape(std::move(s)), value(std::move(v)), requires_grad(rg) {
    MemoryMeter::local().allocate(value.size() * sizeof(double));
  }
  ~Node() { MemoryMeter::local().release((value.size() + grad.size()) * sizeof(double)); }
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  void reset_grad() {
    if (grad.size() != value.size()) {
      MemoryMeter::local().allocate((value.size() - grad.size()) * sizeof(double));
      grad.assign(value.size(), 0.0);
    } else {
      std::fill(grad.begin(), grad.end(), 0.0);
    }
  }

  TensorId id;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::string name;
  const Tape* tape = nullptr;
  std::vector<std::shared_ptr<Node>> inputs;
  // Propagates this node's grad into the grads of its inputs.
  std::function<void(Node&)> backward;
};

}  // namespace detail

// Immutable (outside of optimizer updates to leaves) dense row-major array of
// doubles with shared ownership of its autodiff node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values) {
    check_size(shape, values);
    return Tensor(std::make_shared<detail::Node>(std::move(shape), std::move(values), false));
  }
  static Tensor zeros(Shape shape) {
    const auto n = shape_size(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
  }
  static Tensor scalar(double v) { return constant({1}, {v}); }

  // A trainable leaf.
  static Tensor parameter(Shape shape, std::vector<double> values, std::string name = {}) {
    check_size(shape, values);
    auto node = std::make_shared<detail::Node>(std::move(shape), std::move(values), true);
    node->name = std::move(name);
    return Tensor(std::move(node));
  }

  bool defined() const { return static_cast<bool>(node_); }
  TensorId id() const { return node_->id; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return !node_->backward && node_->inputs.empty(); }
  const std::string& name() const { return node_->name; }
  const char* op() const { return node_->op; }

  std::span<const double> values() const { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const {
    if (size() != 1) throw NumericError("item: tensor is not scalar, shape " + shape_to_string(shape()));
    return node_->value[0];
  }

  // Leaves only: optimizer updates and test fixtures write through this.
  std::span<double> mutable_values() {
    if (!is_leaf()) throw NumericError("mutable_values: tensor '" + name() + "' is not a leaf");
    return node_->value;
  }

  // A copy that no longer participates in autodiff.
  Tensor detach() const { return constant(shape(), node_->value); }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared_node() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  static void check_size(const Shape& shape, const std::vector<double>& values) {
    for (auto d : shape)
      if (d == 0) throw ShapeError("tensor", shape, {values.size()});
    if (shape_size(shape) != values.size()) throw ShapeError("tensor", shape, {values.size()});
  }

  std::shared_ptr<detail::Node> node_;
};

// Ordered record of differentiable operations executed while the tape is
// active on the current thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const std::shared_ptr<detail::Node>& node) {
    node->tape = this;
    nodes_.push_back(node);
  }
  const std::vector<std::shared_ptr<detail::Node>>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  static Tape*& active() {
    thread_local Tape* current = nullptr;
    return current;
  }

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

// Makes a tape the recording target for the current thread for the scope's
// lifetime. Nests.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(Tape::active()) { Tape::active() = &tape; }
  ~TapeScope() { Tape::active() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording, e.g. for evaluation passes.
class NoGradScope {
 public:
  NoGradScope() : previous_(Tape::active()) { Tape::active() = nullptr; }
  ~NoGradScope() { Tape::active() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace mimt::numerics
