#pragma once

#include <memory>
#include <string>
#include <vector>

#include "uadrs/core/rng.hpp"
#include "uadrs/nn/ops.hpp"

namespace uadrs::nn {

struct NamedParam {
  std::string name;
  Var var;
};

// Layers append their parameters in a fixed order so checkpoints and
// optimizer state stay aligned across runs.
class Module {
 public:
  virtual ~Module() = default;
  virtual void collect_params(const std::string& prefix,
                              std::vector<NamedParam>& out) const = 0;
};

class Conv2dLayer : public Module {
 public:
  Conv2dLayer(int in_ch, int out_ch, int kernel, int stride, int pad,
              Rng& rng, bool zero_init = false);
  Var operator()(const Var& x) const { return conv2d(x, w, b, stride_, pad_); }
  void collect_params(const std::string& prefix,
                      std::vector<NamedParam>& out) const override;
  Var w, b;

 private:
  int stride_, pad_;
};

class LinearLayer : public Module {
 public:
  LinearLayer(int in, int out, Rng& rng, bool zero_init = false);
  Var operator()(const Var& x) const { return linear(x, w, b); }
  void collect_params(const std::string& prefix,
                      std::vector<NamedParam>& out) const override;
  Var w, b;
};

class GroupNormLayer : public Module {
 public:
  GroupNormLayer(int channels, int groups);
  Var operator()(const Var& x) const {
    return group_norm(x, gamma, beta, groups_, 1e-5f);
  }
  void collect_params(const std::string& prefix,
                      std::vector<NamedParam>& out) const override;
  Var gamma, beta;

 private:
  int groups_;
};

int64_t param_count(const std::vector<NamedParam>& params);
void zero_grads(const std::vector<NamedParam>& params);

}  // namespace uadrs::nn
