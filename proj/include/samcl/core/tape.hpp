#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <utility>
#include <vector>

#include "samcl/core/tensor.hpp"

namespace samcl::ad {

template <class Real>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
template <class Real>
class Var {
 public:
  Var() = default;
  Var(Tape<Real>* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] Tape<Real>& tape() const { return *tape_; }
  [[nodiscard]] std::size_t id() const noexcept { return id_; }
  [[nodiscard]] const Tensor<Real>& value() const { return tape_->value(id_); }
  [[nodiscard]] const Tensor<Real>& grad() const { return tape_->grad(id_); }
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] bool requires_grad() const { return tape_->requires_grad(id_); }
  [[nodiscard]] Real item() const { return value()[0]; }

 private:
  Tape<Real>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of a single forward evaluation. Nodes are appended in
/// topological order, so backward() is one reverse sweep.
template <class Real>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Real> leaf(Tensor<Real> value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), {}, {}, requires_grad});
    return Var<Real>(this, nodes_.size() - 1);
  }

  Var<Real> constant(Tensor<Real> value) { return leaf(std::move(value), false); }

  /// Appends an op result. `fn` runs during backward() only if some input needs a gradient.
  Var<Real> record(Tensor<Real> value, std::initializer_list<Var<Real>> inputs, Backward fn) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : Backward{}, needs});
    return Var<Real>(this, nodes_.size() - 1);
  }

  [[nodiscard]] const Tensor<Real>& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  [[nodiscard]] bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of node `id`, zero-allocated on first access.
  Tensor<Real>& grad(std::size_t id) {
    auto& node = nodes_[id];
    if (node.grad.empty() && !node.value.empty()) node.grad = Tensor<Real>(node.value.shape());
    return node.grad;
  }

  void backward(Var<Real> root) {
    if (root.value().size() != 1) throw ShapeError("backward() needs a scalar root");
    if (!requires_grad(root.id())) return;
    grad(root.id())[0] = Real(1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (node.backward && !node.grad.empty()) node.backward(*this, i);
    }
  }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    Backward backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

}  // namespace samcl::ad
