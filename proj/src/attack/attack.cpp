#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include "uadrs/attack/attack.hpp"
#include "uadrs/core/archive.hpp"
#include "uadrs/core/error.hpp"
#include "uadrs/core/rng.hpp"
#include "uadrs/data/manifest.hpp"
#include "uadrs/nn/ops.hpp"

namespace uadrs::attack {

namespace {

float sign_of(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

/// Gradient of mean cross-entropy w.r.t. the input pixels.
Tensor ce_input_grad(const ForwardFn& fwd, const Tensor& x,
                     const std::vector<int32_t>& labels) {
  nn::Var xv = nn::make_leaf(x);
  nn::Var loss = nn::softmax_cross_entropy(fwd(xv), labels);
  nn::backward(loss);
  return xv->grad.empty() ? Tensor::zeros_like(x) : xv->grad;
}

bool all_zero(const Tensor& t) {
  for (int64_t i = 0; i < t.size(); ++i)
    if (t[i] != 0.0f) return false;
  return true;
}

void project_ball_clip(Tensor& adv, const Tensor& x, float eps) {
  for (int64_t i = 0; i < adv.size(); ++i) {
    float v = std::clamp(adv[i], x[i] - eps, x[i] + eps);
    adv[i] = std::clamp(v, 0.0f, 1.0f);
  }
}

/// Snaps to the 1/255 pixel grid without leaving the eps-ball (eps < 0 means
/// unbudgeted: only [0,1] applies). Keeps PNG persistence lossless, so the
/// budget survives the round trip. Pixels whose ball contains no grid point
/// are left untouched.
void snap_to_grid(Tensor& adv, const Tensor& x, float eps) {
  for (int64_t i = 0; i < adv.size(); ++i) {
    long lo = 0, hi = 255;
    if (eps >= 0.0f) {
      lo = std::lround(std::ceil(255.0 * std::max(0.0f, x[i] - eps) - 1e-4));
      hi = std::lround(std::floor(255.0 * std::min(1.0f, x[i] + eps) + 1e-4));
      lo = std::clamp(lo, 0L, 255L);
      hi = std::clamp(hi, 0L, 255L);
      if (lo > hi) continue;
    }
    long t = std::clamp(std::lround(255.0 * adv[i]), lo, hi);
    adv[i] = static_cast<float>(t) / 255.0f;
  }
}

AdversarialBatch finish(const data::LabeledBatch& batch, Tensor adv,
                        const AttackConfig& cfg, bool zero_grad,
                        bool budgeted) {
  if (budgeted) {
    project_ball_clip(adv, batch.images.pixels, cfg.epsilon);
    snap_to_grid(adv, batch.images.pixels, cfg.epsilon);
  } else {
    for (int64_t i = 0; i < adv.size(); ++i)
      adv[i] = std::clamp(adv[i], 0.0f, 1.0f);
    snap_to_grid(adv, batch.images.pixels, -1.0f);
  }
  AdversarialBatch out;
  out.images.pixels = std::move(adv);
  out.images.ids = batch.images.ids;
  out.origin_ids = batch.images.ids;
  out.config_hash = cfg.hash();
  out.spec = cfg.spec.empty() ? cfg.canonical() : cfg.spec;
  out.zero_gradient = zero_grad;
  return out;
}

void check_common(const data::LabeledBatch& batch, const AttackConfig& cfg) {
  if (batch.images.n() < 1) throw InsufficientDataError("empty attack batch");
  if (cfg.epsilon < 0.0f) throw ConfigError("epsilon must be >= 0");
  if (cfg.steps < 1) throw ConfigError("steps must be >= 1");
  if (cfg.alpha < 0.0f) throw ConfigError("alpha must be >= 0");
}

float default_alpha(const AttackConfig& cfg) {
  return cfg.alpha > 0.0f ? cfg.alpha
                          : cfg.epsilon / static_cast<float>(cfg.steps);
}

}  // namespace

AdversarialBatch fgsm(const ForwardFn& fwd, const data::LabeledBatch& batch,
                      const AttackConfig& cfg) {
  check_common(batch, cfg);
  const Tensor& x = batch.images.pixels;
  if (cfg.epsilon == 0.0f) return finish(batch, x, cfg, false, true);
  Tensor g = ce_input_grad(fwd, x, batch.labels);
  Tensor adv = x;
  for (int64_t i = 0; i < adv.size(); ++i)
    adv[i] += cfg.epsilon * sign_of(g[i]);
  return finish(batch, std::move(adv), cfg, all_zero(g), true);
}

AdversarialBatch ifgsm(const ForwardFn& fwd, const data::LabeledBatch& batch,
                       const AttackConfig& cfg) {
  check_common(batch, cfg);
  const Tensor& x = batch.images.pixels;
  if (cfg.epsilon == 0.0f) return finish(batch, x, cfg, false, true);
  const float alpha = default_alpha(cfg);
  Tensor adv = x;
  bool any_grad = false;
  for (int step = 0; step < cfg.steps; ++step) {
    Tensor g = ce_input_grad(fwd, adv, batch.labels);
    any_grad = any_grad || !all_zero(g);
    for (int64_t i = 0; i < adv.size(); ++i) adv[i] += alpha * sign_of(g[i]);
    project_ball_clip(adv, x, cfg.epsilon);
  }
  return finish(batch, std::move(adv), cfg, !any_grad, true);
}

AdversarialBatch tpgd(const ForwardFn& fwd, const data::LabeledBatch& batch,
                      const AttackConfig& cfg) {
  check_common(batch, cfg);
  const Tensor& x = batch.images.pixels;
  const float alpha = default_alpha(cfg);

  Tensor ref_probs;
  {
    nn::NoGradGuard guard;
    ref_probs = nn::softmax_probs(fwd(nn::make_const(x))->value);
  }

  Rng rng = Rng(cfg.seed).fork(0x74706764ULL);
  Tensor adv = x;
  for (int64_t i = 0; i < adv.size(); ++i)
    adv[i] += static_cast<float>(rng.uniform(-cfg.epsilon, cfg.epsilon));
  project_ball_clip(adv, x, cfg.epsilon);

  AdversarialBatch out;
  bool any_grad = false;
  std::vector<double> trace;
  for (int step = 0; step < cfg.steps; ++step) {
    nn::Var xv = nn::make_leaf(adv);
    nn::Var kl = nn::kl_to_reference(ref_probs, fwd(xv));
    trace.push_back(kl->value[0]);
    nn::backward(kl);
    const Tensor& g = xv->grad;
    if (!g.empty() && !all_zero(g)) any_grad = true;
    if (!g.empty())
      for (int64_t i = 0; i < adv.size(); ++i) adv[i] += alpha * sign_of(g[i]);
    project_ball_clip(adv, x, cfg.epsilon);
  }
  {
    nn::NoGradGuard guard;
    trace.push_back(
        nn::kl_to_reference(ref_probs, fwd(nn::make_const(adv)))->value[0]);
  }
  out = finish(batch, std::move(adv), cfg, !any_grad, true);
  out.kl_trace = std::move(trace);
  return out;
}

AdversarialBatch cw(const ForwardFn& fwd, const data::LabeledBatch& batch,
                    const AttackConfig& cfg) {
  check_common(batch, cfg);
  if (cfg.mu < 0.0f) throw ConfigError("mu must be >= 0");
  const Tensor& x = batch.images.pixels;
  const int n = batch.images.n();
  const float alpha = cfg.alpha > 0.0f ? cfg.alpha : 1.0f;

  Tensor adv = x;
  std::vector<double> trace;
  for (int step = 0; step < cfg.steps; ++step) {
    nn::Var xv = nn::make_leaf(adv);
    nn::Var dist = nn::scale(nn::linf_dist_sum(xv, x), 1.0f / n);
    nn::Var ce = nn::softmax_cross_entropy(fwd(xv), batch.labels);
    nn::Var obj = nn::sub(dist, nn::scale(ce, cfg.mu));
    const double v = obj->value[0];
    if (!std::isfinite(v)) throw NumericalError("cw objective is not finite");
    trace.push_back(v);
    nn::backward(obj);
    if (!xv->grad.empty())
      for (int64_t i = 0; i < adv.size(); ++i) adv[i] -= alpha * xv->grad[i];
    for (int64_t i = 0; i < adv.size(); ++i)
      adv[i] = std::clamp(adv[i], 0.0f, 1.0f);
  }
  {
    nn::NoGradGuard guard;
    nn::Var xv = nn::make_const(adv);
    double dist = nn::linf_dist_sum(xv, x)->value[0] / n;
    double ce =
        nn::softmax_cross_entropy(fwd(xv), batch.labels)->value[0];
    trace.push_back(dist - cfg.mu * ce);
  }
  AdversarialBatch out = finish(batch, std::move(adv), cfg, false, false);
  out.objective_trace = std::move(trace);
  return out;
}

AdversarialBatch momentum_mix_attack(const ForwardFn& fwd,
                                     const data::LabeledBatch& batch,
                                     const AttackConfig& cfg) {
  check_common(batch, cfg);
  if (cfg.mix_mode != "none" && cfg.mix_mode != "mixup" &&
      cfg.mix_mode != "mixcut")
    throw ConfigError("mix_mode must be none, mixup or mixcut");
  const Tensor& x = batch.images.pixels;
  const int n = batch.images.n();
  const int64_t per = x.size() / n;
  const float alpha = default_alpha(cfg);

  std::vector<int> perm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  if (cfg.mix_mode != "none" && n > 1)
    Rng(cfg.seed).fork(0x6d697870ULL).shuffle(perm);

  // Centered patch covering half the area (side scaled by 1/sqrt(2)).
  Tensor mask;
  if (cfg.mix_mode == "mixcut") {
    const int h = batch.images.height(), w = batch.images.width();
    const int c = batch.images.channels();
    const int ph = std::max(1, static_cast<int>(std::lround(h / std::sqrt(2.0))));
    const int pw = std::max(1, static_cast<int>(std::lround(w / std::sqrt(2.0))));
    const int top = (h - ph) / 2, left = (w - pw) / 2;
    mask = Tensor({n, c, h, w});
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch)
        for (int r = top; r < top + ph; ++r)
          for (int col = left; col < left + pw; ++col)
            mask[((static_cast<int64_t>(i) * c + ch) * h + r) * w + col] = 1.0f;
  }

  Tensor g({batch.images.n(), batch.images.channels(), batch.images.height(),
            batch.images.width()});
  Tensor adv = x;
  bool any_grad = false;

  for (int step = 0; step < cfg.steps; ++step) {
    nn::Var xv = nn::make_leaf(adv);
    nn::Var mixed = xv;
    if (cfg.mix_mode == "mixup") {
      mixed = nn::add(nn::scale(xv, 0.5f),
                      nn::scale(nn::permute_samples(xv, perm), 0.5f));
    } else if (cfg.mix_mode == "mixcut") {
      Tensor inv = Tensor::full_like(mask, 1.0f);
      inv.as_vector() -= mask.as_vector();
      mixed = nn::add(nn::mul(xv, nn::make_const(inv)),
                      nn::mul(nn::permute_samples(xv, perm),
                              nn::make_const(mask)));
    }
    nn::Var loss = nn::softmax_cross_entropy(fwd(mixed), batch.labels);
    nn::backward(loss);
    const Tensor& raw = xv->grad;
    if (!raw.empty()) {
      for (int i = 0; i < n; ++i) {
        double l1 = 0.0;
        for (int64_t k = i * per; k < (i + 1) * per; ++k)
          l1 += std::abs(static_cast<double>(raw[k]));
        if (l1 == 0.0) continue;  // Eq. (5) skip: no direction, keep momentum
        any_grad = true;
        for (int64_t k = i * per; k < (i + 1) * per; ++k)
          g[k] += static_cast<float>(raw[k] / l1);
      }
    }
    for (int i = 0; i < n; ++i) {
      float ginf = 0.0f;
      for (int64_t k = i * per; k < (i + 1) * per; ++k)
        ginf = std::max(ginf, std::abs(g[k]));
      if (ginf == 0.0f) continue;
      for (int64_t k = i * per; k < (i + 1) * per; ++k)
        adv[k] += alpha * g[k] / ginf;
    }
    project_ball_clip(adv, x, cfg.epsilon);
  }
  return finish(batch, std::move(adv), cfg, !any_grad, true);
}

// --- Registry ----------------------------------------------------------------

namespace {

std::map<std::string, AttackFn>& registry() {
  static std::map<std::string, AttackFn> reg = {
      {"fgsm", fgsm},
      {"ifgsm", ifgsm},
      {"tpgd", tpgd},
      {"cw", cw},
      {"momentum_mix", momentum_mix_attack},
  };
  return reg;
}

std::mutex registry_mutex;

}  // namespace

void register_attack(const std::string& name, AttackFn fn) {
  std::lock_guard<std::mutex> lock(registry_mutex);
  if (name.empty() || !fn) throw ConfigError("invalid attack registration");
  if (!registry().emplace(name, std::move(fn)).second)
    throw ConfigError("attack '" + name + "' already registered");
}

std::vector<std::string> registered_attacks() {
  std::lock_guard<std::mutex> lock(registry_mutex);
  std::vector<std::string> names;
  for (const auto& [k, v] : registry()) names.push_back(k);
  return names;
}

AdversarialBatch run_attack(const ForwardFn& fwd,
                            const data::LabeledBatch& batch,
                            const AttackConfig& cfg) {
  AttackFn fn;
  {
    std::lock_guard<std::mutex> lock(registry_mutex);
    auto it = registry().find(cfg.method);
    if (it == registry().end())
      throw ConfigError("unknown attack method '" + cfg.method + "'");
    fn = it->second;
  }
  return fn(fwd, batch, cfg);
}

AdversarialBatch run_attack(const victim::VictimModel& model,
                            const data::LabeledBatch& batch,
                            const AttackConfig& cfg) {
  if (model.task() != batch.task)
    throw CompatibilityError("attack batch task does not match the victim");
  ForwardFn fwd = [&model](const nn::Var& xv) { return model.forward(xv); };
  return run_attack(fwd, batch, cfg);
}

// --- Spec strings -------------------------------------------------------------

namespace {

float parse_float_or_fraction(const std::string& v, const std::string& key) {
  try {
    auto slash = v.find('/');
    if (slash != std::string::npos) {
      double num = std::stod(v.substr(0, slash));
      double den = std::stod(v.substr(slash + 1));
      if (den == 0.0) throw ConfigError("division by zero in " + key);
      return static_cast<float>(num / den);
    }
    return std::stof(v);
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + key + "='" + v + "'");
  }
}

}  // namespace

AttackConfig parse_attack_spec(const std::string& spec) {
  AttackConfig cfg;
  cfg.spec = spec;
  auto colon = spec.find(':');
  cfg.method = spec.substr(0, colon);
  if (cfg.method.empty()) throw ConfigError("empty attack method in '" + spec + "'");

  std::string params = colon == std::string::npos ? "" : spec.substr(colon + 1);
  size_t pos = 0;
  while (pos < params.size()) {
    auto comma = params.find(',', pos);
    std::string kv = params.substr(pos, comma - pos);
    pos = comma == std::string::npos ? params.size() : comma + 1;
    if (kv.empty()) continue;
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("attack parameter '" + kv + "' is not key=value");
    std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    if (key == "eps") {
      cfg.epsilon = parse_float_or_fraction(val, key);
    } else if (key == "steps") {
      cfg.steps = static_cast<int>(std::stol(val));
    } else if (key == "alpha") {
      cfg.alpha = parse_float_or_fraction(val, key);
    } else if (key == "mu") {
      cfg.mu = parse_float_or_fraction(val, key);
    } else if (key == "mix") {
      cfg.mix_mode = val;
    } else if (key == "seed") {
      cfg.seed = std::stoull(val);
    } else {
      throw ConfigError("unknown attack parameter '" + key + "'");
    }
  }
  if (cfg.epsilon < 0.0f) throw ConfigError("epsilon must be >= 0");
  if (cfg.steps < 1) throw ConfigError("steps must be >= 1");
  if (cfg.alpha < 0.0f) throw ConfigError("alpha must be >= 0");
  if (cfg.mu < 0.0f) throw ConfigError("mu must be >= 0");
  if (cfg.mix_mode != "none" && cfg.mix_mode != "mixup" &&
      cfg.mix_mode != "mixcut")
    throw ConfigError("mix_mode must be none, mixup or mixcut");
  return cfg;
}

std::string AttackConfig::canonical() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%s:eps=%.8g,steps=%d,alpha=%.8g,mu=%.8g,mix=%s,seed=%llu",
                method.c_str(), static_cast<double>(epsilon), steps,
                static_cast<double>(alpha), static_cast<double>(mu),
                mix_mode.c_str(), static_cast<unsigned long long>(seed));
  return buf;
}

std::string AttackConfig::hash() const { return fnv1a_hex(canonical()); }

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

void save_adversarial(const AdversarialBatch& batch,
                      const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  nlohmann::json samples = nlohmann::json::array();
  for (int i = 0; i < batch.images.n(); ++i) {
    const std::string file = safe_name(batch.origin_ids[static_cast<size_t>(i)]);
    io::write_png(dir / file, data::sample_to_image(batch.images.pixels, i));
    samples.push_back({{"origin", batch.origin_ids[static_cast<size_t>(i)]},
                       {"file", file}});
  }
  nlohmann::json side = {{"kind", "adversarial"},
                         {"config_hash", batch.config_hash},
                         {"spec", batch.spec},
                         {"zero_gradient", batch.zero_gradient},
                         {"samples", samples}};
  data::atomic_write_text(dir / "adversarial.json", data::canonical_json(side));
}

AdversarialBatch load_adversarial(const std::filesystem::path& dir) {
  const auto side_path = dir / "adversarial.json";
  if (!std::filesystem::exists(side_path))
    throw IoError("no adversarial sidecar at " + side_path.string());
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
  for (const char* key : {"kind", "config_hash", "spec", "samples"})
    if (!side.contains(key))
      throw SchemaError("sidecar missing '" + std::string(key) + "'");
  if (side["kind"] != "adversarial")
    throw SchemaError("sidecar kind is not 'adversarial'");

  AdversarialBatch out;
  out.config_hash = side["config_hash"].get<std::string>();
  out.spec = side["spec"].get<std::string>();
  out.zero_gradient = side.value("zero_gradient", false);
  const auto& samples = side["samples"];
  if (samples.empty()) throw InsufficientDataError("sidecar lists no samples");

  for (size_t i = 0; i < samples.size(); ++i) {
    io::Image8 img = io::read_png(dir / samples[i].at("file").get<std::string>());
    if (i == 0)
      out.images.pixels = Tensor({static_cast<int>(samples.size()),
                                  img.channels, img.height, img.width});
    if (img.height != out.images.height() || img.width != out.images.width() ||
        img.channels != out.images.channels())
      throw IngestionError("adversarial image geometry mismatch: " +
                           samples[i].at("file").get<std::string>());
    data::image_to_sample(img, out.images.pixels, static_cast<int>(i));
    out.origin_ids.push_back(samples[i].at("origin").get<std::string>());
  }
  out.images.ids = out.origin_ids;
  return out;
}

}  // namespace uadrs::attack
