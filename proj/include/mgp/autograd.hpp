#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Ops create a new node holding the
// forward value plus a closure that, given the node's accumulated gradient,
// accumulates gradients into the node's inputs. Var::backward() runs those
// closures in reverse topological order. Leaf Vars with requires_grad = true
// act as parameters: their gradients persist until zero_grad().

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mgp/tensor.hpp"

namespace mgp {

template <typename Real>
struct Node {
  Tensor<Real> value;
  Tensor<Real> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool has_grad() const { return !grad.empty(); }
  // Lazily allocates a zero gradient of the value's shape.
  Tensor<Real>& grad_buffer() {
    if (grad.empty()) grad = Tensor<Real>(value.shape());
    return grad;
  }
};

// While alive on the current thread, ops do not record graph edges.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool active();

 private:
  bool previous_;
};

template <typename Real>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<Real>> node) : node_(std::move(node)) {}

  static Var leaf(Tensor<Real> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<Real>& value() const { return node_->value; }
  Tensor<Real>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->has_grad(); }
  const Tensor<Real>& grad() const { return node_->grad; }
  Tensor<Real>& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<Real>(); }

  // Seeds d(this)/d(this) = 1 for every element and propagates to all
  // ancestors that require gradients.
  void backward();

  Node<Real>* node() const { return node_.get(); }
  const std::shared_ptr<Node<Real>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<Real>> node_;
};

// Builds the result node of an op. The backward closure is only attached when
// gradient recording is on and at least one input requires gradients.
template <typename Real>
Var<Real> make_op_result(Tensor<Real> value, std::vector<Var<Real>> inputs,
                         std::function<void(Node<Real>&)> backward) {
  auto n = std::make_shared<Node<Real>>();
  n->value = std::move(value);
  if (!NoGradGuard::active()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) {
    n->inputs.reserve(inputs.size());
    for (auto& in : inputs) n->inputs.push_back(in.node_ptr());
    n->backward = std::move(backward);
  }
  return Var<Real>(std::move(n));
}

// Named trainable parameters; std::map keeps iteration lexicographic.
template <typename Real>
using ParamSet = std::map<std::string, Var<Real>>;

template <typename Real>
ParamSet<Real> clone_params(const ParamSet<Real>& params) {
  ParamSet<Real> out;
  for (const auto& [name, v] : params) out.emplace(name, Var<Real>::leaf(v.value(), true));
  return out;
}

template <typename Real>
std::size_t param_count(const ParamSet<Real>& params) {
  std::size_t n = 0;
  for (const auto& [name, v] : params) n += v.value().size();
  return n;
}

}  // namespace mgp
