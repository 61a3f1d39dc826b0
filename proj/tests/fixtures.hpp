#pragma once

#include <filesystem>
#include <optional>

#include "uadrs/data/dataset.hpp"
#include "uadrs/victim/victim.hpp"

namespace uadrs::test {

namespace fs = std::filesystem;

/// Shared per-process fixture: one small classification corpus plus victims
/// trained on it, built on first use. The corpus matches the desk profile the
/// attack/purify pipeline is tuned for.
struct Workbench {
  static Workbench& get() {
    static Workbench w;
    return w;
  }

  fs::path root;
  data::DatasetSpec cls_spec;
  data::DatasetSplits cls;

  victim::VictimModel& victim() {
    if (!victim_) {
      victim_ckpt = root / "victim_cls.ckpt";
      victim_ = victim::train_victim(cls_spec, cls, "small_cnn",
                                     train_config(42), victim_ckpt);
    }
    return *victim_;
  }

  /// Independently initialized second victim for transfer scenarios.
  victim::VictimModel& victim_b() {
    if (!victim_b_) {
      victim_b_ckpt = root / "victim_cls_b.ckpt";
      victim_b_ = victim::train_victim(cls_spec, cls, "small_cnn",
                                       train_config(1234), victim_b_ckpt);
    }
    return *victim_b_;
  }

  static victim::TrainConfig train_config(uint64_t seed) {
    victim::TrainConfig cfg;
    cfg.epochs = 16;
    cfg.batch_size = 32;
    cfg.seed = seed;
    return cfg;
  }

  fs::path victim_ckpt;
  fs::path victim_b_ckpt;

 private:
  Workbench() {
    root = fs::temp_directory_path() / "uadrs_unit_fixture";
    fs::remove_all(root);
    cls_spec = data::generate_synthetic_corpus(
        data::Task::classification, 6, 60, 32, 32, 42, root / "cls_corpus");
    cls = data::load_dataset(cls_spec);
  }

  std::optional<victim::VictimModel> victim_;
  std::optional<victim::VictimModel> victim_b_;
};

}  // namespace uadrs::test
