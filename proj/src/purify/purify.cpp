#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "uadrs/core/archive.hpp"
#include "uadrs/data/manifest.hpp"
#include "uadrs/io/png.hpp"
#include "uadrs/purify/purify.hpp"

namespace uadrs::purify {

std::string model_id(const ddpm::DiffusionModel& model) {
  std::string buf;
  char head[160];
  std::snprintf(head, sizeof(head), "%s:%d:%.17g:%.17g:%d:%d:%d",
                model.schedule.kind.c_str(), model.schedule.T,
                model.schedule.beta_start, model.schedule.beta_end,
                model.net->in_channels(), model.net->base_channels(),
                model.net->time_dim());
  buf += head;
  for (const auto& p : model.net->parameters()) {
    buf += p.name;
    const auto* bytes = reinterpret_cast<const char*>(p.var->value.data());
    buf.append(bytes, p.var->value.size() * sizeof(float));
  }
  return fnv1a_hex(buf);
}

PurifiedBatch purify(const ddpm::DiffusionModel& model,
                     const data::ImageBatch& batch, const PurifyConfig& cfg,
                     const std::string& source_attack_hash) {
  const ddpm::NoiseSchedule& s = model.schedule;
  if (cfg.t_m < 1 || cfg.t_m > s.T)
    throw RangeError("purify noise level " + std::to_string(cfg.t_m) +
                     " outside [1," + std::to_string(s.T) + "]");
  if (batch.n() < 1) throw InsufficientDataError("purify: empty batch");
  if (batch.channels() != model.net->in_channels())
    throw CompatibilityError(
        "batch has " + std::to_string(batch.channels()) +
        " channels but the diffusion checkpoint expects " +
        std::to_string(model.net->in_channels()));

  Rng master(cfg.seed);
  Tensor x = ddpm::to_diffusion(batch.pixels);

  Tensor eps = Tensor::zeros_like(x);
  Rng jump_rng = master.fork(0x6a756d70ULL);
  jump_rng.fill_normal(eps, 0.0f, 1.0f);
  x = ddpm::diffuse_closed_form(x, cfg.t_m, eps, s);

  ddpm::Predictor pred = model.predictor();
  for (int t = cfg.t_m; t >= 1; --t) {
    Rng step_rng = master.fork(0x64656e6fULL, static_cast<uint64_t>(t));
    x = ddpm::denoise_step(x, t, pred, s, step_rng, cfg.deterministic);
  }

  PurifiedBatch out;
  out.images.pixels = ddpm::from_diffusion(x);
  out.images.ids = batch.ids;
  out.source_attack_hash = source_attack_hash;
  out.t_m = cfg.t_m;
  out.checkpoint_id = model_id(model);
  return out;
}

std::map<int, PurifiedBatch> purify_sweep(const ddpm::DiffusionModel& model,
                                          const data::ImageBatch& batch,
                                          const std::vector<int>& levels,
                                          uint64_t seed, bool deterministic,
                                          const std::string& source_attack_hash) {
  if (levels.empty()) throw ConfigError("purify_sweep: no noise levels given");
  std::set<int> seen;
  for (int L : levels)
    if (!seen.insert(L).second)
      throw ConfigError("purify_sweep: duplicate noise level " +
                        std::to_string(L));

  std::map<int, PurifiedBatch> out;
  for (int L : levels) {
    PurifyConfig cfg;
    cfg.t_m = L;
    cfg.seed = seed;
    cfg.deterministic = deterministic;
    out.emplace(L, purify(model, batch, cfg, source_attack_hash));
  }
  return out;
}

// --- Persistence ---------------------------------------------------------------

namespace {

std::string safe_name(const std::string& id) {
  std::string out = id;
  for (char& c : out)
    if (c == '/' || c == '\\') c = '_';
  if (out.size() < 4 || out.substr(out.size() - 4) != ".png") out += ".png";
  return out;
}

}  // namespace

void save_purified(const PurifiedBatch& batch,
                   const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  nlohmann::json samples = nlohmann::json::array();
  for (int i = 0; i < batch.images.n(); ++i) {
    const std::string file = safe_name(batch.images.ids[static_cast<size_t>(i)]);
    io::write_png(dir / file, data::sample_to_image(batch.images.pixels, i));
    samples.push_back({{"origin", batch.images.ids[static_cast<size_t>(i)]},
                       {"file", file}});
  }
  nlohmann::json side = {{"kind", "purified"},
                         {"source_attack_hash", batch.source_attack_hash},
                         {"t_m", batch.t_m},
                         {"checkpoint_id", batch.checkpoint_id},
                         {"samples", samples}};
  data::atomic_write_text(dir / "purified.json", data::canonical_json(side));
}

PurifiedBatch load_purified(const std::filesystem::path& dir) {
  const auto side_path = dir / "purified.json";
  if (!std::filesystem::exists(side_path))
    throw IoError("no purified sidecar at " + side_path.string());
  nlohmann::json side;
  {
    std::ifstream in(side_path);
    if (!in) throw IoError("cannot read " + side_path.string());
    try {
      in >> side;
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("malformed sidecar " + side_path.string() + ": " +
                        e.what());
    }
  }
  for (const char* key :
       {"kind", "source_attack_hash", "t_m", "checkpoint_id", "samples"})
    if (!side.contains(key))
      throw SchemaError("sidecar missing '" + std::string(key) + "'");
  if (side["kind"] != "purified")
    throw SchemaError("sidecar kind is not 'purified'");

  PurifiedBatch out;
  out.source_attack_hash = side["source_attack_hash"].get<std::string>();
  out.t_m = side["t_m"].get<int>();
  out.checkpoint_id = side["checkpoint_id"].get<std::string>();
  const auto& samples = side["samples"];
  if (samples.empty()) throw InsufficientDataError("sidecar lists no samples");

  for (size_t i = 0; i < samples.size(); ++i) {
    io::Image8 img = io::read_png(dir / samples[i].at("file").get<std::string>());
    if (i == 0)
      out.images.pixels = Tensor({static_cast<int>(samples.size()),
                                  img.channels, img.height, img.width});
    if (img.height != out.images.height() || img.width != out.images.width() ||
        img.channels != out.images.channels())
      throw IngestionError("purified image geometry mismatch: " +
                           samples[i].at("file").get<std::string>());
    data::image_to_sample(img, out.images.pixels, static_cast<int>(i));
    out.images.ids.push_back(samples[i].at("origin").get<std::string>());
  }
  return out;
}

}  // namespace uadrs::purify
