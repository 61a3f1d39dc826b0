#pragma once

#include <string>
#include <vector>

#include "uadrs/core/archive.hpp"
#include "uadrs/nn/layers.hpp"

namespace uadrs::nn {

class Adam {
 public:
  explicit Adam(std::vector<NamedParam> params, float lr = 1e-3f,
                float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);

  void step();
  void zero_grad();

  float lr() const { return lr_; }
  void set_lr(float lr) { lr_ = lr; }
  int64_t step_count() const { return t_; }

  // Moment buffers travel with checkpoints so training can resume bit-exact.
  void export_state(std::vector<std::pair<std::string, const Tensor*>>& out,
                    nlohmann::json& meta) const;
  void import_state(const LoadedArchive& ar);

 private:
  struct Slot {
    NamedParam p;
    Tensor m, v;
  };
  std::vector<Slot> slots_;
  float lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace uadrs::nn
