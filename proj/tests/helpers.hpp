#pragma once

#include <functional>
#include <vector>

#include "uadrs/core/rng.hpp"
#include "uadrs/nn/autodiff.hpp"

namespace uadrs::test {

using nn::Var;
using uadrs::Tensor;

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, float lo = -1.0f,
                            float hi = 1.0f) {
  Tensor t(std::move(shape));
  rng.fill_uniform(t, lo, hi);
  return t;
}

// Central-difference gradient check. `f` must rebuild the graph from the
// leaves' current values on every call. Returns the worst relative error
// over all elements of all leaves.
inline double gradcheck(const std::function<Var(const std::vector<Var>&)>& f,
                        const std::vector<Var>& leaves, float h = 1e-2f) {
  for (const auto& l : leaves) {
    l->requires_grad = true;
    l->grad = Tensor();
  }
  Var loss = f(leaves);
  nn::backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (const auto& l : leaves) analytic.push_back(l->grad);

  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor& v = leaves[li]->value;
    for (int64_t i = 0; i < v.size(); ++i) {
      const float orig = v[i];
      const float step = h * std::max(1.0f, std::fabs(orig));
      v[i] = orig + step;
      const double lp = f(leaves)->value[0];
      v[i] = orig - step;
      const double lm = f(leaves)->value[0];
      v[i] = orig;
      const double num = (lp - lm) / (2.0 * step);
      const double ana = analytic[li].size() > 0 ? analytic[li][i] : 0.0;
      const double err =
          std::fabs(num - ana) /
          std::max(1.0, std::max(std::fabs(num), std::fabs(ana)));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace uadrs::test
