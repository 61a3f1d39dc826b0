#include <nlohmann/json.hpp>

#include "uadrs/core/archive.hpp"
#include "uadrs/core/rng.hpp"
#include "uadrs/victim/victim.hpp"

namespace uadrs::victim {

using nn::Var;

VictimModel VictimModel::build(const std::string& arch, data::Task task,
                               int in_ch, int n_classes, int image_size,
                               uint64_t seed) {
  if (n_classes < 2) throw ConfigError("victim needs >= 2 classes");
  if (image_size % 4 != 0)
    throw ConfigError("victim image size must be divisible by 4");
  VictimModel m;
  m.arch_ = arch;
  m.task_ = task;
  m.in_ch_ = in_ch;
  m.n_classes_ = n_classes;
  m.image_size_ = image_size;
  Rng rng(splitmix64(seed ^ 0x7631c0deULL));

  if (arch == "small_cnn") {
    if (task != data::Task::classification)
      throw ConfigError("small_cnn is a classification architecture");
    const int chans[5] = {in_ch, 16, 32, 48, 64};
    for (int i = 0; i < 4; ++i)
      m.enc_.push_back(std::make_shared<nn::Conv2dLayer>(
          chans[i], chans[i + 1], 3, 1, 1, rng));
    m.feature_dim_ = 64;
    m.head_ = std::make_shared<nn::LinearLayer>(m.feature_dim_, n_classes, rng);
  } else if (arch == "small_segmenter") {
    if (task != data::Task::segmentation)
      throw ConfigError("small_segmenter is a segmentation architecture");
    m.enc_.push_back(std::make_shared<nn::Conv2dLayer>(in_ch, 16, 3, 1, 1, rng));
    m.enc_.push_back(std::make_shared<nn::Conv2dLayer>(16, 32, 3, 1, 1, rng));
    m.enc_.push_back(std::make_shared<nn::Conv2dLayer>(32, 48, 3, 1, 1, rng));
    m.dec_.push_back(std::make_shared<nn::Conv2dLayer>(48, 32, 3, 1, 1, rng));
    m.dec_.push_back(std::make_shared<nn::Conv2dLayer>(32, 16, 3, 1, 1, rng));
    m.out_conv_ = std::make_shared<nn::Conv2dLayer>(16, n_classes, 1, 1, 0, rng);
    m.feature_dim_ = 48;
  } else {
    throw ConfigError("unknown victim architecture '" + arch + "'");
  }
  return m;
}

Var VictimModel::encoder(const Var& x) const {
  // normalize [0,1] pixels to roughly unit scale around zero
  Var h = nn::scale(nn::add_scalar(x, -0.5f), 4.0f);
  if (arch_ == "small_cnn") {
    for (size_t i = 0; i < enc_.size(); ++i) {
      h = nn::relu((*enc_[i])(h));
      if (i + 1 < enc_.size()) h = nn::avg_pool2d(h);
    }
    return h;
  }
  h = nn::relu((*enc_[0])(h));
  h = nn::avg_pool2d(h);
  h = nn::relu((*enc_[1])(h));
  h = nn::avg_pool2d(h);
  h = nn::relu((*enc_[2])(h));
  return h;
}

Var VictimModel::forward(const Var& x) const {
  if (x->value.rank() != 4 || x->value.dim(1) != in_ch_ ||
      x->value.dim(2) != image_size_ || x->value.dim(3) != image_size_)
    throw ShapeError("victim expects [N," + std::to_string(in_ch_) + "," +
                     std::to_string(image_size_) + "," +
                     std::to_string(image_size_) + "], got " +
                     x->value.shape_str());
  Var deep = encoder(x);
  if (arch_ == "small_cnn") return (*head_)(nn::global_avg_pool(deep));
  Var h = nn::upsample_nearest2(deep);
  h = nn::relu((*dec_[0])(h));
  h = nn::upsample_nearest2(h);
  h = nn::relu((*dec_[1])(h));
  return (*out_conv_)(h);
}

Tensor VictimModel::forward_logits(const Tensor& images) const {
  nn::NoGradGuard ng;
  return forward(nn::make_const(images))->value;
}

Tensor VictimModel::encoder_features(const Tensor& images) const {
  if (!trained_)
    throw StateError("encoder features requested from an untrained victim");
  nn::NoGradGuard ng;
  Var deep = encoder(nn::make_const(images));
  return nn::global_avg_pool(deep)->value;
}

std::vector<nn::NamedParam> VictimModel::parameters() const {
  std::vector<nn::NamedParam> ps;
  for (size_t i = 0; i < enc_.size(); ++i)
    enc_[i]->collect_params("enc" + std::to_string(i), ps);
  for (size_t i = 0; i < dec_.size(); ++i)
    dec_[i]->collect_params("dec" + std::to_string(i), ps);
  if (head_) head_->collect_params("head", ps);
  if (out_conv_) out_conv_->collect_params("out", ps);
  return ps;
}

void VictimModel::save(const std::filesystem::path& path,
                       const nlohmann::json& extra_meta) const {
  nlohmann::json meta = extra_meta;
  meta["kind"] = "victim";
  meta["format_version"] = 1;
  meta["arch"] = arch_;
  meta["task"] = data::task_name(task_);
  meta["in_channels"] = in_ch_;
  meta["n_classes"] = n_classes_;
  meta["image_size"] = image_size_;
  meta["feature_dim"] = feature_dim_;
  meta["trained"] = trained_;
  std::vector<std::pair<std::string, const Tensor*>> ts;
  auto ps = parameters();
  ts.reserve(ps.size());
  for (const auto& p : ps) ts.emplace_back(p.name, &p.var->value);
  write_archive(path, meta, ts);
}

VictimModel VictimModel::load(const std::filesystem::path& path) {
  LoadedArchive ar = read_archive(path);
  const nlohmann::json& meta = *ar.meta;
  if (!meta.contains("kind") || meta.at("kind") != "victim")
    throw CompatibilityError("not a victim checkpoint: " + path.string());
  VictimModel m = build(meta.at("arch").get<std::string>(),
                        data::parse_task(meta.at("task").get<std::string>()),
                        meta.at("in_channels").get<int>(),
                        meta.at("n_classes").get<int>(),
                        meta.at("image_size").get<int>(), 0);
  for (auto& p : m.parameters()) {
    if (!ar.has_tensor(p.name))
      throw IntegrityError("checkpoint lacks tensor " + p.name);
    const Tensor& t = ar.tensor(p.name);
    check_same_shape(t, p.var->value, "checkpoint tensor");
    p.var->value = t;
  }
  m.trained_ = meta.value("trained", false);
  return m;
}

}  // namespace uadrs::victim
