#include <nlohmann/json.hpp>

#include <cmath>

#include "uadrs/core/rng.hpp"
#include "uadrs/nn/optim.hpp"
#include "uadrs/victim/victim.hpp"

namespace uadrs::victim {

VictimModel train_victim(const data::DatasetSpec& spec,
                         const data::DatasetSplits& splits,
                         const std::string& arch, const TrainConfig& cfg,
                         const std::filesystem::path& checkpoint_path) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (cfg.lr <= 0.0f) throw ConfigError("learning rate must be positive");
  if (cfg.optimizer != "adam")
    throw ConfigError("unknown optimizer '" + cfg.optimizer + "'");

  const data::LabeledBatch& train = splits.train;
  VictimModel model =
      VictimModel::build(arch, spec.task, train.images.channels(),
                         spec.n_classes, spec.height, cfg.seed);
  nn::Adam opt(model.parameters(), cfg.lr);

  Rng order_rng = Rng(cfg.seed).fork(0x7261696eULL);
  const int n = train.images.n();
  std::vector<int> order(static_cast<size_t>(n));
  std::vector<double> first_epoch_batches;
  std::vector<double> epoch_means;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    order_rng.fork(static_cast<uint64_t>(epoch)).shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n - start);
      // gather the shuffled batch
      data::ImageBatch xb;
      xb.pixels = Tensor({count, train.images.channels(),
                          train.images.height(), train.images.width()});
      std::vector<int32_t> yb;
      const int64_t per = static_cast<int64_t>(train.images.channels()) *
                          train.images.height() * train.images.width();
      const int64_t lper =
          train.task == data::Task::classification
              ? 1
              : static_cast<int64_t>(train.images.height()) *
                    train.images.width();
      yb.resize(static_cast<size_t>(count * lper));
      for (int i = 0; i < count; ++i) {
        const int src = order[static_cast<size_t>(start + i)];
        std::copy(train.images.pixels.data() + src * per,
                  train.images.pixels.data() + (src + 1) * per,
                  xb.pixels.data() + i * per);
        std::copy(train.labels.begin() + src * lper,
                  train.labels.begin() + (src + 1) * lper,
                  yb.begin() + i * lper);
      }

      opt.zero_grad();
      nn::Var logits = model.forward(nn::make_const(xb.pixels));
      nn::Var loss = nn::softmax_cross_entropy(logits, yb);
      const double lv = loss->value[0];
      if (!std::isfinite(lv))
        throw TrainingError("victim training diverged (loss not finite)");
      nn::backward(loss);
      opt.step();

      epoch_loss += lv;
      ++batches;
      if (epoch == 0) first_epoch_batches.push_back(lv);
    }
    epoch_means.push_back(epoch_loss / std::max(1, batches));
  }
  model.mark_trained();

  nlohmann::json meta;
  meta["train"]["epochs"] = cfg.epochs;
  meta["train"]["batch_size"] = cfg.batch_size;
  meta["train"]["lr"] = cfg.lr;
  meta["train"]["seed"] = cfg.seed;
  meta["train"]["first_epoch_batch_losses"] = first_epoch_batches;
  meta["train"]["epoch_mean_losses"] = epoch_means;
  model.save(checkpoint_path, meta);
  return model;
}

VictimModel train_victim(const data::DatasetSpec& spec, const std::string& arch,
                         const TrainConfig& cfg,
                         const std::filesystem::path& checkpoint_path) {
  data::DatasetSplits splits = data::load_dataset(spec);
  return train_victim(spec, splits, arch, cfg, checkpoint_path);
}

}  // namespace uadrs::victim
