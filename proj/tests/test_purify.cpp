#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "uadrs/purify/purify.hpp"

using namespace uadrs;

namespace {

namespace fs = std::filesystem;

/// Untrained denoiser: the zero-initialized head makes it predict eps = 0
/// exactly, which turns the reverse chain into pure schedule algebra.
ddpm::DiffusionModel toy_model(int T = 40, uint64_t seed = 5) {
  ddpm::DiffusionModel m;
  m.schedule = ddpm::make_schedule(T, 1e-4, 0.02, "scaled_linear");
  m.net = std::make_shared<ddpm::Denoiser>(3, 8, 16, seed);
  m.meta = std::make_shared<nlohmann::json>();
  return m;
}

data::ImageBatch toy_batch(int n = 2, int side = 16, uint64_t seed = 11) {
  data::ImageBatch b;
  b.pixels = Tensor({n, 3, side, side});
  Rng rng(seed);
  rng.fill_uniform(b.pixels, 0.05f, 0.95f);
  for (int i = 0; i < n; ++i)
    b.ids.push_back("class_" + std::to_string(i) + "/img_000" +
                    std::to_string(i) + ".png");
  return b;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  float m = 0.0f;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("purify");

TEST_CASE("jump and reverse chain follow the documented noise derivation") {
  ddpm::DiffusionModel model = toy_model();
  data::ImageBatch batch = toy_batch();

  purify::PurifyConfig cfg;
  cfg.t_m = 5;
  cfg.seed = 77;

  // replicate the contract from the header: jump eps from fork(0x6a756d70),
  // reverse z at step t from fork(0x64656e6f, t)
  for (bool deterministic : {true, false}) {
    cfg.deterministic = deterministic;
    purify::PurifiedBatch got = purify::purify(model, batch, cfg);

    Rng master(cfg.seed);
    Tensor x = ddpm::to_diffusion(batch.pixels);
    Tensor eps = Tensor::zeros_like(x);
    Rng jump = master.fork(0x6a756d70ULL);
    jump.fill_normal(eps, 0.0f, 1.0f);
    x = ddpm::diffuse_closed_form(x, cfg.t_m, eps, model.schedule);
    ddpm::Predictor pred = model.predictor();
    for (int t = cfg.t_m; t >= 1; --t) {
      Rng z = master.fork(0x64656e6fULL, static_cast<uint64_t>(t));
      x = ddpm::denoise_step(x, t, pred, model.schedule, z, deterministic);
    }
    Tensor want = ddpm::from_diffusion(x);

    REQUIRE(got.images.pixels.same_shape(want));
    for (int64_t i = 0; i < want.size(); ++i)
      CHECK(got.images.pixels[i] == want[i]);
  }
}

TEST_CASE("same seed purifies to identical bytes, new seed does not") {
  ddpm::DiffusionModel model = toy_model();
  data::ImageBatch batch = toy_batch();
  purify::PurifyConfig cfg;
  cfg.t_m = 12;
  cfg.seed = 3;

  purify::PurifiedBatch a = purify::purify(model, batch, cfg);
  purify::PurifiedBatch b = purify::purify(model, batch, cfg);
  for (int64_t i = 0; i < a.images.pixels.size(); ++i)
    CHECK(a.images.pixels[i] == b.images.pixels[i]);

  cfg.seed = 4;
  purify::PurifiedBatch c = purify::purify(model, batch, cfg);
  CHECK(max_abs_diff(a.images.pixels, c.images.pixels) > 0.0f);
}

TEST_CASE("minimal noise level is a near-identity") {
  ddpm::DiffusionModel model = toy_model();
  model.schedule = ddpm::make_schedule(10, 1e-6, 1e-6, "linear");
  data::ImageBatch batch = toy_batch(3);

  purify::PurifyConfig cfg;
  cfg.t_m = 1;
  cfg.seed = 9;
  purify::PurifiedBatch out = purify::purify(model, batch, cfg);
  CHECK(max_abs_diff(out.images.pixels, batch.pixels) < 0.02f);
}

TEST_CASE("output range, ids and provenance") {
  ddpm::DiffusionModel model = toy_model();
  data::ImageBatch batch = toy_batch();
  purify::PurifyConfig cfg;
  cfg.t_m = 30;  // deep into the chain; raw chain values exceed [0,1]
  cfg.seed = 21;
  purify::PurifiedBatch out =
      purify::purify(model, batch, cfg, "deadbeefdeadbeef");

  CHECK(out.images.pixels.min() >= 0.0f);
  CHECK(out.images.pixels.max() <= 1.0f);
  CHECK(out.images.ids == batch.ids);
  CHECK(out.t_m == 30);
  CHECK(out.source_attack_hash == "deadbeefdeadbeef");
  CHECK(!out.checkpoint_id.empty());
  // identity is parameter-sensitive
  CHECK(out.checkpoint_id == purify::model_id(model));
  CHECK(out.checkpoint_id != purify::model_id(toy_model(40, 6)));
}

TEST_CASE("sweep shares the jump noise and validates its level list") {
  ddpm::DiffusionModel model = toy_model();
  data::ImageBatch batch = toy_batch();

  auto sweep = purify::purify_sweep(model, batch, {2, 5}, 77, true);
  REQUIRE(sweep.size() == 2);
  purify::PurifyConfig cfg;
  cfg.seed = 77;
  cfg.deterministic = true;
  for (int L : {2, 5}) {
    cfg.t_m = L;
    purify::PurifiedBatch lone = purify::purify(model, batch, cfg);
    for (int64_t i = 0; i < lone.images.pixels.size(); ++i)
      CHECK(sweep.at(L).images.pixels[i] == lone.images.pixels[i]);
  }

  CHECK_THROWS_AS(purify::purify_sweep(model, batch, {}, 1), ConfigError);
  CHECK_THROWS_AS(purify::purify_sweep(model, batch, {3, 3}, 1), ConfigError);
  CHECK_THROWS_AS(purify::purify_sweep(model, batch, {0}, 1), RangeError);
  CHECK_THROWS_AS(purify::purify_sweep(model, batch, {41}, 1), RangeError);

  data::ImageBatch gray;
  gray.pixels = Tensor({1, 1, 16, 16}, 0.5f);
  gray.ids = {"g"};
  purify::PurifyConfig one;
  one.t_m = 2;
  CHECK_THROWS_AS(purify::purify(model, gray, one), CompatibilityError);

  data::ImageBatch empty;
  CHECK_THROWS_AS(purify::purify(model, empty, one), InsufficientDataError);
}

TEST_CASE("purified batches persist to PNG plus sidecar and load back") {
  ddpm::DiffusionModel model = toy_model();
  data::ImageBatch batch = toy_batch();
  purify::PurifyConfig cfg;
  cfg.t_m = 8;
  cfg.seed = 13;
  purify::PurifiedBatch out = purify::purify(model, batch, cfg, "cafe01");

  const fs::path dir = fs::temp_directory_path() / "uadrs_purify_io";
  fs::remove_all(dir);
  purify::save_purified(out, dir);
  CHECK(fs::exists(dir / "purified.json"));

  purify::PurifiedBatch back = purify::load_purified(dir);
  CHECK(back.t_m == out.t_m);
  CHECK(back.checkpoint_id == out.checkpoint_id);
  CHECK(back.source_attack_hash == "cafe01");
  CHECK(back.images.ids == out.images.ids);
  REQUIRE(back.images.pixels.same_shape(out.images.pixels));
  // 8-bit quantization is the only loss
  CHECK(max_abs_diff(back.images.pixels, out.images.pixels) <=
        0.5f / 255.0f + 1e-6f);

  CHECK_THROWS_AS(purify::load_purified(dir / "nope"), IoError);
  const fs::path broken = fs::temp_directory_path() / "uadrs_purify_bad";
  fs::remove_all(broken);
  fs::create_directories(broken);
  std::ofstream(broken / "purified.json") << "{ not json";
  CHECK_THROWS_AS(purify::load_purified(broken), SchemaError);
}

TEST_SUITE_END();
