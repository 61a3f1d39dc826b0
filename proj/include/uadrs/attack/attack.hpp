#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "uadrs/data/dataset.hpp"
#include "uadrs/victim/victim.hpp"

namespace uadrs::attack {

struct AttackConfig {
  std::string method;
  float epsilon = 8.0f / 255.0f;
  int steps = 10;
  float alpha = 0.0f;  // 0 = method default (eps/steps for sign attacks)
  float mu = 300.0f;   // cw trade-off weight
  std::string mix_mode = "none";
  uint64_t seed = 0;
  std::string spec;  // the string this config was parsed from, for reports

  std::string canonical() const;
  std::string hash() const;
};

/// "method:key=value,..."; eps accepts fractions like 8/255. Unknown methods
/// or keys are config errors.
AttackConfig parse_attack_spec(const std::string& spec);

struct AdversarialBatch {
  data::ImageBatch images;
  std::vector<std::string> origin_ids;
  std::string config_hash;
  std::string spec;
  /// Set when the loss gradient vanished everywhere (attack left x alone).
  bool zero_gradient = false;
  /// cw: Eq.-style objective value per iteration (batch mean).
  std::vector<double> objective_trace;
  /// tpgd: KL objective per iteration (batch mean), ascending if healthy.
  std::vector<double> kl_trace;
};

/// Differentiable logits for a batch node; lets tests swap in analytic toy
/// models where oracles are computable by hand.
using ForwardFn = std::function<nn::Var(const nn::Var&)>;

AdversarialBatch fgsm(const ForwardFn& fwd, const data::LabeledBatch& batch,
                      const AttackConfig& cfg);
AdversarialBatch ifgsm(const ForwardFn& fwd, const data::LabeledBatch& batch,
                       const AttackConfig& cfg);
AdversarialBatch tpgd(const ForwardFn& fwd, const data::LabeledBatch& batch,
                      const AttackConfig& cfg);
AdversarialBatch cw(const ForwardFn& fwd, const data::LabeledBatch& batch,
                    const AttackConfig& cfg);
AdversarialBatch momentum_mix_attack(const ForwardFn& fwd,
                                     const data::LabeledBatch& batch,
                                     const AttackConfig& cfg);

/// Dispatch by cfg.method through the registry; the VictimModel overload
/// checks the task matches the labels first.
AdversarialBatch run_attack(const ForwardFn& fwd,
                            const data::LabeledBatch& batch,
                            const AttackConfig& cfg);
AdversarialBatch run_attack(const victim::VictimModel& model,
                            const data::LabeledBatch& batch,
                            const AttackConfig& cfg);

using AttackFn = std::function<AdversarialBatch(
    const ForwardFn&, const data::LabeledBatch&, const AttackConfig&)>;

/// Plugin point; built-ins are pre-registered.
void register_attack(const std::string& name, AttackFn fn);
std::vector<std::string> registered_attacks();

/// PNG per sample plus a JSON sidecar (config hash, spec, origin ids,
/// zero-gradient flag). The sidecar is the join key for downstream stages.
void save_adversarial(const AdversarialBatch& batch,
                      const std::filesystem::path& dir);
AdversarialBatch load_adversarial(const std::filesystem::path& dir);

}  // namespace uadrs::attack
