#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "uadrs/core/tensor.hpp"

namespace uadrs::nn {

/// Node in the reverse-mode tape. Values are computed eagerly; backward_fn
/// scatters node.grad into the parents' grads.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (grad.empty() && !value.empty()) grad = Tensor::zeros_like(value);
    return grad;
  }
};

using Var = std::shared_ptr<Node>;

/// Leaf that participates in gradients (parameters, attacked inputs).
Var make_leaf(Tensor value);

/// Value that never needs gradients.
Var make_const(Tensor value);

/// While a guard is alive, ops create constant nodes and no tape is built.
/// Used for inference paths (sampling, purification, evaluation).
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Reverse pass from a scalar root; seeds d(root)/d(root) = 1.
void backward(const Var& root);

}  // namespace uadrs::nn
