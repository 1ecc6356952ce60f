// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mimt/numerics/tensor.hpp"

namespace mimt::numerics {

// Gradients of a scalar root with respect to every requires_grad leaf reached
// from it, in first-reached order.
class Gradients {
 public:
  void insert(const Tensor& leaf, std::vector<double> grad) {
    index_.emplace(leaf.id(), entries_.size());
    entries_.push_back({leaf, Tensor::constant(leaf.shape(), std::move(grad))});
  }

  const Tensor* find(TensorId id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &entries_[it->second].grad;
  }
  const Tensor* find(const Tensor& leaf) const { return find(leaf.id()); }
  const Tensor& at(const Tensor& leaf) const {
    const Tensor* g = find(leaf);
    if (!g) throw NumericError("gradient requested for a tensor outside the root's ancestry");
    return *g;
  }
  bool contains(const Tensor& leaf) const { return find(leaf) != nullptr; }

  struct Entry {
    Tensor leaf;
    Tensor grad;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<TensorId, std::size_t> index_;
};

// Reverse-mode sweep over `tape` from `root`. Grad buffers of every node on
// the tape and of the leaves it references are reset first, so repeated calls
// produce identical results.
inline Gradients backward(const Tape& tape, const Tensor& root) {
  if (!root.defined()) throw NumericError("backward: undefined root");
  if (root.size() != 1)
    throw NumericError("backward: root must be scalar, got shape " + shape_to_string(root.shape()));
  if (root.node()->tape != &tape || !root.node()->backward)
    throw NumericError("backward: root is not recorded on this tape (detached)");

  std::vector<std::shared_ptr<detail::Node>> leaves;
  std::unordered_set<const detail::Node*> seen;
  for (const auto& node : tape.nodes()) {
    node->reset_grad();
    for (const auto& in : node->inputs)
      if (in->requires_grad && !in->backward && seen.insert(in.get()).second) {
        in->reset_grad();
        leaves.push_back(in);
      }
  }
  root.node()->grad[0] = 1.0;

  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);

  Gradients grads;
  for (const auto& leaf : leaves) grads.insert(Tensor(leaf), leaf->grad);
  return grads;
}

}  // namespace mimt::numerics
