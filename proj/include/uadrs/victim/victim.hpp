#pragma once

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "uadrs/data/dataset.hpp"
#include "uadrs/nn/layers.hpp"

namespace uadrs::victim {

struct TrainConfig {
  int epochs = 5;
  int batch_size = 32;
  float lr = 3e-3f;
  std::string optimizer = "adam";
  uint64_t seed = 0;
};

/// Small victims: "small_cnn" (4 conv blocks, pooled head) for
/// classification, "small_segmenter" (3-stage encoder / 2-stage decoder) for
/// segmentation. The encoder feature tap is the globally averaged deepest
/// stage, which is what ANLS fits Gaussians over.
class VictimModel {
 public:
  static VictimModel build(const std::string& arch, data::Task task, int in_ch,
                           int n_classes, int image_size, uint64_t seed);

  /// Logits graph over an input node; differentiable w.r.t. the input.
  nn::Var forward(const nn::Var& x) const;

  /// Inference-mode logits: [N,C] or [N,C,H,W].
  Tensor forward_logits(const Tensor& images) const;

  /// [N, D] pooled deepest-encoder features. Requires a trained checkpoint.
  Tensor encoder_features(const Tensor& images) const;

  std::vector<nn::NamedParam> parameters() const;

  const std::string& arch() const { return arch_; }
  data::Task task() const { return task_; }
  int n_classes() const { return n_classes_; }
  int in_channels() const { return in_ch_; }
  int image_size() const { return image_size_; }
  int feature_dim() const { return feature_dim_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  void save(const std::filesystem::path& path,
            const nlohmann::json& extra_meta) const;
  static VictimModel load(const std::filesystem::path& path);

 private:
  VictimModel() = default;
  nn::Var encoder(const nn::Var& x) const;  // deepest stage, pre-pooling

  std::string arch_;
  data::Task task_ = data::Task::classification;
  int in_ch_ = 3, n_classes_ = 0, image_size_ = 0, feature_dim_ = 0;
  bool trained_ = false;

  std::vector<std::shared_ptr<nn::Conv2dLayer>> enc_;
  std::vector<std::shared_ptr<nn::Conv2dLayer>> dec_;
  std::shared_ptr<nn::LinearLayer> head_;
  std::shared_ptr<nn::Conv2dLayer> out_conv_;
};

/// Trains a fresh victim on the dataset the spec points at and persists the
/// checkpoint. Per-batch losses of the first epoch and per-epoch means land
/// in the checkpoint metadata. Returns the trained model.
VictimModel train_victim(const data::DatasetSpec& spec, const std::string& arch,
                         const TrainConfig& cfg,
                         const std::filesystem::path& checkpoint_path);

/// Same, but reuses already-loaded splits (training uses .train only).
VictimModel train_victim(const data::DatasetSpec& spec,
                         const data::DatasetSplits& splits,
                         const std::string& arch, const TrainConfig& cfg,
                         const std::filesystem::path& checkpoint_path);

}  // namespace uadrs::victim
