#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>

#include "uadrs/core/archive.hpp"
#include "uadrs/core/error.hpp"
#include "uadrs/ddpm/ddpm.hpp"
#include "uadrs/nn/ops.hpp"
#include "uadrs/nn/optim.hpp"

namespace uadrs::ddpm {

nn::Var ddpm_loss(const Denoiser& net, const Tensor& x0_internal,
                  const NoiseSchedule& s, Rng& rng) {
  if (x0_internal.rank() != 4)
    throw ShapeError("ddpm_loss expects [N,C,H,W], got " +
                     x0_internal.shape_str());
  const int n = x0_internal.dim(0);
  const int64_t per = x0_internal.size() / n;

  std::vector<int> ts(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    ts[static_cast<size_t>(i)] = static_cast<int>(rng.randint(1, s.T));
  Tensor eps = Tensor::zeros_like(x0_internal);
  rng.fill_normal(eps);

  Tensor xt = Tensor::zeros_like(x0_internal);
  for (int i = 0; i < n; ++i) {
    const double ab = s.abar(ts[static_cast<size_t>(i)]);
    const float a = static_cast<float>(std::sqrt(ab));
    const float b = static_cast<float>(std::sqrt(1.0 - ab));
    for (int64_t k = i * per; k < (i + 1) * per; ++k)
      xt[k] = a * x0_internal[k] + b * eps[k];
  }

  nn::Var pred = net.forward(nn::make_const(xt), ts, s.T);
  return nn::mse_loss(pred, nn::make_const(eps));
}

namespace {

nlohmann::json schedule_meta(const NoiseSchedule& s) {
  return {{"T", s.T},
          {"kind", s.kind},
          {"beta_start", s.beta_start},
          {"beta_end", s.beta_end}};
}

Tensor schedule_betas(const NoiseSchedule& s) {
  Tensor b({s.T});
  for (int t = 0; t < s.T; ++t)
    b[t] = static_cast<float>(s.beta[static_cast<size_t>(t)]);
  return b;
}

void write_checkpoint(const std::filesystem::path& path,
                      const DiffusionModel& model, const nn::Adam* opt) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& p : model.net->parameters())
    tensors.emplace_back(p.name, &p.var->value);
  Tensor betas = schedule_betas(model.schedule);
  tensors.emplace_back("schedule.beta", &betas);

  nlohmann::json meta = *model.meta;
  meta["kind"] = "diffusion";
  meta["format_version"] = 1;
  meta["schedule"] = schedule_meta(model.schedule);
  meta["arch"] = {{"in_channels", model.net->in_channels()},
                  {"base_channels", model.net->base_channels()},
                  {"time_dim", model.net->time_dim()}};
  if (opt) opt->export_state(tensors, meta);
  write_archive(path, meta, tensors);
}

double holdout_loss(const Denoiser& net, const Tensor& xt,
                    const std::vector<int>& ts, const Tensor& eps, int T) {
  Tensor pred = net.predict(xt, ts, T);
  double acc = 0.0;
  for (int64_t i = 0; i < pred.size(); ++i) {
    double d = static_cast<double>(pred[i]) - eps[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace

Predictor DiffusionModel::predictor() const {
  auto n = net;
  const int T = schedule.T;
  return [n, T](const Tensor& x, const std::vector<int>& t) {
    return n->predict(x, t, T);
  };
}

void DiffusionModel::save(const std::filesystem::path& path) const {
  write_checkpoint(path, *this, nullptr);
}

DiffusionModel DiffusionModel::load(const std::filesystem::path& path) {
  LoadedArchive ar = read_archive(path);
  if (!ar.meta->contains("kind") || (*ar.meta)["kind"] != "diffusion")
    throw CompatibilityError("not a diffusion checkpoint: " + path.string());

  const auto& sm = ar.meta->at("schedule");
  DiffusionModel model;
  model.schedule =
      make_schedule(sm.at("T").get<int>(), sm.at("beta_start").get<double>(),
                    sm.at("beta_end").get<double>(), sm.at("kind").get<std::string>());
  if (!ar.has_tensor("schedule.beta"))
    throw IntegrityError("checkpoint lacks embedded schedule betas");
  const Tensor& stored = ar.tensor("schedule.beta");
  if (stored.size() != model.schedule.T)
    throw IntegrityError("embedded schedule length disagrees with metadata");
  for (int t = 0; t < model.schedule.T; ++t)
    if (std::abs(stored[t] -
                 static_cast<float>(model.schedule.beta[static_cast<size_t>(t)])) >
        1e-6f)
      throw IntegrityError("embedded schedule betas disagree with metadata");

  const auto& am = ar.meta->at("arch");
  model.net = std::make_shared<Denoiser>(
      am.at("in_channels").get<int>(), am.at("base_channels").get<int>(),
      am.at("time_dim").get<int>(), 0);
  for (auto& p : model.net->parameters()) {
    if (!ar.has_tensor(p.name))
      throw IntegrityError("checkpoint missing tensor '" + p.name + "'");
    const Tensor& t = ar.tensor(p.name);
    if (!t.same_shape(p.var->value))
      throw IntegrityError("checkpoint tensor '" + p.name +
                           "' has unexpected shape " + t.shape_str());
    p.var->value = t;
  }
  model.meta = std::make_shared<nlohmann::json>(*ar.meta);
  return model;
}

DiffusionModel train_diffusion(const data::DatasetSpec& spec,
                               const data::DatasetSplits& splits,
                               const NoiseSchedule& schedule,
                               const DiffusionTrainConfig& cfg,
                               const std::filesystem::path& checkpoint_path,
                               const std::filesystem::path& resume_from) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (cfg.lr <= 0.0f) throw ConfigError("learning rate must be positive");
  if (cfg.holdout < 1) throw ConfigError("holdout size must be >= 1");

  const data::ImageBatch& train = splits.train.images;
  if (train.n() < 1) throw InsufficientDataError("empty training split");
  const Tensor x0_all = to_diffusion(train.pixels);
  const int64_t per = x0_all.size() / train.n();

  const Rng master(cfg.seed);

  // Frozen held-out batch: fixed images, timesteps and noise, so the loss
  // curve across epochs is a paired comparison.
  const data::ImageBatch hold_images =
      splits.test.images.n() > 0
          ? splits.test.images.slice(0, std::min(cfg.holdout, splits.test.images.n()))
          : train.slice(0, std::min(cfg.holdout, train.n()));
  Rng hold_rng = master.fork(0x686f6c64ULL);
  const Tensor hold_x0 = to_diffusion(hold_images.pixels);
  std::vector<int> hold_t(static_cast<size_t>(hold_images.n()));
  for (auto& t : hold_t) t = static_cast<int>(hold_rng.randint(1, schedule.T));
  Tensor hold_eps = Tensor::zeros_like(hold_x0);
  hold_rng.fill_normal(hold_eps);
  Tensor hold_xt = Tensor::zeros_like(hold_x0);
  const int64_t hper = hold_x0.size() / hold_images.n();
  for (int i = 0; i < hold_images.n(); ++i) {
    const double ab = schedule.abar(hold_t[static_cast<size_t>(i)]);
    const float a = static_cast<float>(std::sqrt(ab));
    const float b = static_cast<float>(std::sqrt(1.0 - ab));
    for (int64_t k = i * hper; k < (i + 1) * hper; ++k)
      hold_xt[k] = a * hold_x0[k] + b * hold_eps[k];
  }

  DiffusionModel model;
  model.schedule = schedule;
  int epochs_done = 0;
  std::vector<double> holdout_curve;
  std::vector<double> epoch_means;

  if (!resume_from.empty()) {
    model = DiffusionModel::load(resume_from);
    const auto& sm = model.meta->at("schedule");
    if (sm.at("T").get<int>() != schedule.T ||
        sm.at("kind").get<std::string>() != schedule.kind)
      throw CompatibilityError("resume checkpoint was trained on a different schedule");
    if (model.net->base_channels() != cfg.base_channels ||
        model.net->time_dim() != cfg.time_dim)
      throw CompatibilityError("resume checkpoint has a different architecture");
    epochs_done = model.meta->value("epochs_done", 0);
    if (epochs_done >= cfg.epochs)
      throw ConfigError("checkpoint already has " + std::to_string(epochs_done) +
                        " epochs; asked for " + std::to_string(cfg.epochs));
    holdout_curve =
        model.meta->value("holdout_losses", std::vector<double>{});
    epoch_means =
        model.meta->value("train_epoch_means", std::vector<double>{});
  } else {
    model.net = std::make_shared<Denoiser>(train.channels(), cfg.base_channels,
                                           cfg.time_dim, cfg.seed);
    model.meta = std::make_shared<nlohmann::json>(nlohmann::json::object());
  }

  nn::Adam opt(model.net->parameters(), cfg.lr);
  if (!resume_from.empty()) opt.import_state(read_archive(resume_from));

  if (holdout_curve.empty())
    holdout_curve.push_back(
        holdout_loss(*model.net, hold_xt, hold_t, hold_eps, schedule.T));

  const int n = train.n();
  std::vector<int> order(static_cast<size_t>(n));
  for (int epoch = epochs_done; epoch < cfg.epochs; ++epoch) {
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    master.fork(0x6f726472ULL, static_cast<uint64_t>(epoch)).shuffle(order);

    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n - start);
      Tensor xb({count, train.channels(), train.height(), train.width()});
      for (int i = 0; i < count; ++i) {
        const int src = order[static_cast<size_t>(start + i)];
        std::copy(x0_all.data() + src * per, x0_all.data() + (src + 1) * per,
                  xb.data() + i * per);
      }
      // Per-batch noise stream keyed by (epoch, batch) so a resumed run
      // replays the uninterrupted one exactly.
      Rng noise = master.fork(0x6e6f6973ULL, static_cast<uint64_t>(epoch),
                              static_cast<uint64_t>(batches));

      opt.zero_grad();
      nn::Var loss = ddpm_loss(*model.net, xb, schedule, noise);
      const double lv = loss->value[0];
      if (!std::isfinite(lv))
        throw TrainingError("diffusion training diverged (loss not finite)");
      nn::backward(loss);
      opt.step();
      epoch_loss += lv;
      ++batches;
    }
    epoch_means.push_back(epoch_loss / std::max(1, batches));
    holdout_curve.push_back(
        holdout_loss(*model.net, hold_xt, hold_t, hold_eps, schedule.T));
  }

  (*model.meta)["epochs_done"] = cfg.epochs;
  (*model.meta)["batch_size"] = cfg.batch_size;
  (*model.meta)["lr"] = cfg.lr;
  (*model.meta)["seed"] = cfg.seed;
  (*model.meta)["dataset_root"] = spec.root.string();
  (*model.meta)["holdout_losses"] = holdout_curve;
  (*model.meta)["train_epoch_means"] = epoch_means;
  write_checkpoint(checkpoint_path, model, &opt);
  return model;
}

data::ImageBatch sample_unconditional(const DiffusionModel& model, int n,
                                      int height, int width, Rng& rng) {
  if (n < 1) throw ConfigError("sample count must be >= 1");
  Tensor x({n, model.net->in_channels(), height, width});
  rng.fill_normal(x);
  Predictor pred = model.predictor();
  for (int t = model.schedule.T; t >= 1; --t)
    x = denoise_step(x, t, pred, model.schedule, rng);

  data::ImageBatch out;
  out.pixels = from_diffusion(x);
  out.ids.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%04d", i);
    out.ids[static_cast<size_t>(i)] = buf;
  }
  return out;
}

}  // namespace uadrs::ddpm
