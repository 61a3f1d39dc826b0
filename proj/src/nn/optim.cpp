#include "uadrs/nn/optim.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace uadrs::nn {

Adam::Adam(std::vector<NamedParam> params, float lr, float beta1, float beta2,
           float eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  slots_.reserve(params.size());
  for (auto& p : params) {
    Slot s;
    s.p = std::move(p);
    s.m = Tensor(s.p.var->value.shape());
    s.v = Tensor(s.p.var->value.shape());
    slots_.push_back(std::move(s));
  }
}

void Adam::step() {
  ++t_;
  const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  for (auto& s : slots_) {
    Node& node = *s.p.var;
    if (node.grad.size() != node.value.size()) continue;  // never touched
    const int64_t n = node.value.size();
    for (int64_t i = 0; i < n; ++i) {
      const float g = node.grad[i];
      s.m[i] = beta1_ * s.m[i] + (1.0f - beta1_) * g;
      s.v[i] = beta2_ * s.v[i] + (1.0f - beta2_) * g * g;
      const float mhat = s.m[i] / bc1;
      const float vhat = s.v[i] / bc2;
      node.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_)
    if (s.p.var->grad.size() > 0) s.p.var->grad.as_vector().setZero();
}

void Adam::export_state(
    std::vector<std::pair<std::string, const Tensor*>>& out,
    nlohmann::json& meta) const {
  meta["adam_step"] = t_;
  meta["adam_lr"] = lr_;
  for (const auto& s : slots_) {
    out.emplace_back("adam.m." + s.p.name, &s.m);
    out.emplace_back("adam.v." + s.p.name, &s.v);
  }
}

void Adam::import_state(const LoadedArchive& ar) {
  if (!ar.meta || !ar.meta->contains("adam_step")) return;
  t_ = ar.meta->at("adam_step").get<int64_t>();
  for (auto& s : slots_) {
    const std::string mk = "adam.m." + s.p.name;
    const std::string vk = "adam.v." + s.p.name;
    if (!ar.has_tensor(mk) || !ar.has_tensor(vk))
      throw IntegrityError("optimizer state missing for " + s.p.name);
    s.m = ar.tensor(mk);
    s.v = ar.tensor(vk);
    check_same_shape(s.m, s.p.var->value, "adam state");
  }
}

}  // namespace uadrs::nn
