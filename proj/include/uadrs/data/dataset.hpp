#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uadrs/core/tensor.hpp"
#include "uadrs/io/png.hpp"

namespace uadrs::data {

enum class Task { classification, segmentation };

std::string task_name(Task t);
Task parse_task(const std::string& name);

/// Images in [0,1], rank-4 [N,C,H,W], one id per sample.
struct ImageBatch {
  Tensor pixels;
  std::vector<std::string> ids;

  int n() const { return pixels.rank() == 4 ? pixels.dim(0) : 0; }
  int channels() const { return pixels.dim(1); }
  int height() const { return pixels.dim(2); }
  int width() const { return pixels.dim(3); }

  /// Copy of samples [first, first+count).
  ImageBatch slice(int first, int count) const;
};

/// Labels: classification holds N class indices; segmentation holds N*H*W
/// per-pixel indices in row-major order.
struct LabeledBatch {
  ImageBatch images;
  std::vector<int32_t> labels;
  Task task = Task::classification;

  std::vector<int32_t> label_slice(int first, int count) const;
};

struct DatasetSpec {
  std::filesystem::path root;
  Task task = Task::classification;
  int n_classes = 0;
  int height = 0;
  int width = 0;
  double train_fraction = 0.8;
  uint64_t seed = 0;
};

struct DatasetSplits {
  LabeledBatch train;
  LabeledBatch test;
};

/// Loads the dataset under spec.root and splits it deterministically
/// (per-class for classification). Pixels are scaled to [0,1].
DatasetSplits load_dataset(const DatasetSpec& spec);

/// Writes a procedural corpus in the standard on-disk layout and returns a
/// spec pointing at it. `family` selects the texture vocabulary: "A"
/// (stripes / blobs / checkers) is the in-domain corpus, "B"
/// (rings / dots / waves) the cross-domain one.
DatasetSpec generate_synthetic_corpus(Task task, int n_classes,
                                      int n_per_class, int height, int width,
                                      uint64_t seed,
                                      const std::filesystem::path& root,
                                      const std::string& family = "A");

/// [0,1] float sample <-> interleaved 8-bit image.
io::Image8 sample_to_image(const Tensor& pixels, int sample);
void image_to_sample(const io::Image8& img, Tensor& pixels, int sample);

}  // namespace uadrs::data
