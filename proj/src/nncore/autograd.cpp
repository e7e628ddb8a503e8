#include "mgp/autograd.hpp"

#include <unordered_set>
#include <utility>

namespace mgp {

namespace {
thread_local bool g_no_grad = false;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

template <typename Real>
void Var<Real>::backward() {
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; the reversed order visits every node after all
  // of its consumers.
  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> visited;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node<Real>* child = n->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer().fill(Real{1});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Real>* n = *it;
    if (n->backward && n->has_grad()) {
      n->backward(*n);
      n->grad = Tensor<Real>();  // interior gradients are not kept
    }
  }
}

template class Var<float>;
template class Var<double>;

}  // namespace mgp
