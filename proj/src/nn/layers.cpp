#include "uadrs/nn/layers.hpp"

#include <cmath>

namespace uadrs::nn {

Conv2dLayer::Conv2dLayer(int in_ch, int out_ch, int kernel, int stride,
                         int pad, Rng& rng, bool zero_init)
    : stride_(stride), pad_(pad) {
  Tensor wt({out_ch, in_ch, kernel, kernel});
  if (!zero_init) {
    const float std =
        std::sqrt(2.0f / static_cast<float>(in_ch * kernel * kernel));
    rng.fill_normal(wt, 0.0f, std);
  }
  w = make_leaf(std::move(wt));
  b = make_leaf(Tensor({out_ch}));
}

void Conv2dLayer::collect_params(const std::string& prefix,
                                 std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

LinearLayer::LinearLayer(int in, int out, Rng& rng, bool zero_init) {
  Tensor wt({out, in});
  if (!zero_init) {
    const float std = std::sqrt(2.0f / static_cast<float>(in));
    rng.fill_normal(wt, 0.0f, std);
  }
  w = make_leaf(std::move(wt));
  b = make_leaf(Tensor({out}));
}

void LinearLayer::collect_params(const std::string& prefix,
                                 std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

GroupNormLayer::GroupNormLayer(int channels, int groups) : groups_(groups) {
  gamma = make_leaf(Tensor({channels}, 1.0f));
  beta = make_leaf(Tensor({channels}));
}

void GroupNormLayer::collect_params(const std::string& prefix,
                                    std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

int64_t param_count(const std::vector<NamedParam>& params) {
  int64_t total = 0;
  for (const auto& p : params) total += p.var->value.size();
  return total;
}

void zero_grads(const std::vector<NamedParam>& params) {
  for (const auto& p : params)
    if (p.var->grad.size() > 0) p.var->grad.as_vector().setZero();
}

}  // namespace uadrs::nn
