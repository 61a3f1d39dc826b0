#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "uadrs/data/dataset.hpp"
#include "uadrs/ddpm/ddpm.hpp"

namespace uadrs::purify {

struct PurifyConfig {
  int t_m = 0;          // noise level, 1 <= t_m <= schedule.T
  uint64_t seed = 0;
  bool deterministic = false;  // sigma == 0 on every reverse step
};

/// Purified images plus the provenance the evaluation join runs on.
struct PurifiedBatch {
  data::ImageBatch images;
  std::string source_attack_hash;  // "clean" when no attack preceded
  int t_m = 0;
  std::string checkpoint_id;
};

/// Stable identity of a diffusion model: hash over schedule, architecture
/// and every parameter tensor.
std::string model_id(const ddpm::DiffusionModel& model);

/// Diffuse `batch` to t_m in one closed-form jump, then walk the learned
/// reverse chain back to t=0. Noise derivation, given master = Rng(seed):
/// the jump eps comes from master.fork(0x6a756d70) and the reverse-step z at
/// step t from master.fork(0x64656e6f, t), each filling the whole batch.
PurifiedBatch purify(const ddpm::DiffusionModel& model,
                     const data::ImageBatch& batch, const PurifyConfig& cfg,
                     const std::string& source_attack_hash = "clean");

/// One purify per level with the same seed, so the forward jump shares its
/// noise across levels and the comparison is paired.
std::map<int, PurifiedBatch> purify_sweep(
    const ddpm::DiffusionModel& model, const data::ImageBatch& batch,
    const std::vector<int>& levels, uint64_t seed, bool deterministic = false,
    const std::string& source_attack_hash = "clean");

/// PNG per sample plus a `purified.json` sidecar carrying the provenance.
void save_purified(const PurifiedBatch& batch,
                   const std::filesystem::path& dir);
PurifiedBatch load_purified(const std::filesystem::path& dir);

}  // namespace uadrs::purify
