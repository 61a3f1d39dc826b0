#include "uadrs/nn/autodiff.hpp"

#include <unordered_set>

namespace uadrs::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

Var make_leaf(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

Var make_const(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = false;
  return n;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backward(const Var& root) {
  if (!root) throw StateError("backward on null node");
  if (root->value.size() != 1)
    throw ShapeError("backward requires a scalar root, got " +
                     root->value.shape_str());
  if (!root->requires_grad)
    throw StateError("backward on a node that does not require gradients");

  // Iterative post-order DFS; reversed post-order is a topological order
  // with children (outputs) before parents (inputs).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    Node* node = stack.back().first;
    size_t idx = stack.back().second;
    if (idx < node->parents.size()) {
      ++stack.back().second;  // advance before any push invalidates back()
      Node* p = node->parents[idx].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

}  // namespace uadrs::nn
