#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "uadrs/attack/attack.hpp"
#include "uadrs/core/archive.hpp"
#include "uadrs/eval/metrics.hpp"
#include "uadrs/nn/ops.hpp"

using namespace uadrs;
using test::Workbench;

namespace {

/// Two-pixel linear-softmax toy: logits = W x for x flattened to [N,2].
attack::ForwardFn linear_toy(std::array<float, 4> w) {
  Tensor W({2, 2});
  std::copy(w.begin(), w.end(), W.data());
  Tensor b({2}, 0.0f);
  return [W, b](const nn::Var& xv) {
    return nn::linear(nn::reshape(xv, {xv->value.dim(0), 2}), nn::make_const(W),
                      nn::make_const(b));
  };
}

data::LabeledBatch toy_batch(float p0, float p1, int32_t label) {
  data::LabeledBatch b;
  b.images.pixels = Tensor({1, 1, 1, 2});
  b.images.pixels[0] = p0;
  b.images.pixels[1] = p1;
  b.images.ids = {"toy_0"};
  b.labels = {label};
  b.task = data::Task::classification;
  return b;
}

data::LabeledBatch sub_batch(const data::LabeledBatch& b, int first, int count) {
  data::LabeledBatch out;
  out.images = b.images.slice(first, count);
  out.labels = b.label_slice(first, count);
  out.task = b.task;
  return out;
}

double oa_on(const victim::VictimModel& model, const Tensor& pixels,
             const std::vector<int32_t>& labels) {
  return eval::overall_accuracy(
      nn::argmax_classes(model.forward_logits(pixels)), labels);
}

double linf(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

constexpr float kEps8 = 8.0f / 255.0f;

}  // namespace

TEST_SUITE_BEGIN("attack");

TEST_CASE("attack spec strings parse and reject junk") {
  attack::AttackConfig cfg = attack::parse_attack_spec("ifgsm:eps=8/255,steps=10");
  CHECK(cfg.method == "ifgsm");
  CHECK(cfg.epsilon == doctest::Approx(8.0 / 255.0));
  CHECK(cfg.steps == 10);
  CHECK(cfg.spec == "ifgsm:eps=8/255,steps=10");

  attack::AttackConfig bare = attack::parse_attack_spec("fgsm");
  CHECK(bare.method == "fgsm");
  CHECK(bare.epsilon == doctest::Approx(8.0 / 255.0));  // default

  attack::AttackConfig full = attack::parse_attack_spec(
      "momentum_mix:eps=0.05,steps=4,alpha=0.01,mix=mixcut,seed=9");
  CHECK(full.mix_mode == "mixcut");
  CHECK(full.seed == 9);
  CHECK(full.alpha == doctest::Approx(0.01));

  CHECK_THROWS_AS(attack::parse_attack_spec("fgsm:eps=-0.1"), ConfigError);
  CHECK_THROWS_AS(attack::parse_attack_spec("fgsm:steps=0"), ConfigError);
  CHECK_THROWS_AS(attack::parse_attack_spec("fgsm:frobnicate=1"), ConfigError);
  CHECK_THROWS_AS(attack::parse_attack_spec("fgsm:eps"), ConfigError);
  CHECK_THROWS_AS(attack::parse_attack_spec("fgsm:eps=1/0"), ConfigError);
  CHECK_THROWS_AS(attack::parse_attack_spec("momentum_mix:mix=blend"),
                  ConfigError);
  CHECK_THROWS_AS(attack::parse_attack_spec(":eps=0.1"), ConfigError);

  // Same settings, different spelling -> same hash; changed eps -> different.
  attack::AttackConfig a = attack::parse_attack_spec("fgsm:eps=8/255");
  attack::AttackConfig b = attack::parse_attack_spec("fgsm:eps=0.03137255");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != attack::parse_attack_spec("fgsm:eps=4/255").hash());
}

TEST_CASE("fgsm matches the hand-derived linear-softmax gradient") {
  // W = [[1,-1],[-1,1]], y=0, x=[128/255,128/255]: dL/dx = [-p1*2, p1*2]
  // pattern, so signs are [-1,+1].
  auto fwd = linear_toy({1.0f, -1.0f, -1.0f, 1.0f});
  data::LabeledBatch b = toy_batch(128.0f / 255, 128.0f / 255, 0);
  attack::AttackConfig cfg = attack::parse_attack_spec("fgsm:eps=8/255");

  attack::AdversarialBatch adv = attack::fgsm(fwd, b, cfg);
  CHECK(adv.images.pixels[0] == doctest::Approx(120.0 / 255).epsilon(1e-6));
  CHECK(adv.images.pixels[1] == doctest::Approx(136.0 / 255).epsilon(1e-6));
  CHECK(!adv.zero_gradient);

  // All-positive gradient: W = [[0,0],[1,1]] pushes both pixels up by eps.
  auto up = linear_toy({0.0f, 0.0f, 1.0f, 1.0f});
  attack::AdversarialBatch adv2 = attack::fgsm(up, b, cfg);
  CHECK(adv2.images.pixels[0] == doctest::Approx(136.0 / 255).epsilon(1e-6));
  CHECK(adv2.images.pixels[1] == doctest::Approx(136.0 / 255).epsilon(1e-6));

  // eps=0 collapses to the input.
  attack::AttackConfig zero = attack::parse_attack_spec("fgsm:eps=0");
  attack::AdversarialBatch same = attack::fgsm(fwd, b, zero);
  CHECK(same.images.pixels[0] == b.images.pixels[0]);
  CHECK(same.images.pixels[1] == b.images.pixels[1]);

  // Constant logits -> zero gradient everywhere -> unchanged plus flag.
  auto flat = linear_toy({0.0f, 0.0f, 0.0f, 0.0f});
  attack::AdversarialBatch warned = attack::fgsm(flat, b, cfg);
  CHECK(warned.zero_gradient);
  CHECK(warned.images.pixels[0] == b.images.pixels[0]);
}

TEST_CASE("ifgsm with one step is exactly fgsm") {
  Workbench& wb = Workbench::get();
  victim::VictimModel& model = wb.victim();
  data::LabeledBatch batch = sub_batch(wb.cls.test, 0, 12);

  attack::AttackConfig one = attack::parse_attack_spec("ifgsm:eps=8/255,steps=1");
  attack::AdversarialBatch a = attack::ifgsm(
      [&](const nn::Var& x) { return model.forward(x); }, batch, one);
  attack::AttackConfig f = attack::parse_attack_spec("fgsm:eps=8/255");
  attack::AdversarialBatch b = attack::run_attack(model, batch, f);
  for (int64_t i = 0; i < a.images.pixels.size(); ++i)
    CHECK(a.images.pixels[i] == b.images.pixels[i]);
}

TEST_CASE("budgeted attacks respect the eps ball, [0,1] and the pixel grid") {
  Workbench& wb = Workbench::get();
  victim::VictimModel& model = wb.victim();
  data::LabeledBatch batch = sub_batch(wb.cls.test, 3, 10);

  const char* specs[] = {
      "fgsm:eps=8/255",
      "ifgsm:eps=8/255,steps=5",
      "tpgd:eps=8/255,steps=5,seed=3",
      "momentum_mix:eps=8/255,steps=5,mix=mixup,seed=3",
      "momentum_mix:eps=2/255,steps=3,mix=mixcut,seed=4",
      "ifgsm:eps=0.02,steps=3,alpha=0.02",  // alpha override beyond eps/steps
  };
  for (const char* spec : specs) {
    INFO("spec ", spec);
    attack::AdversarialBatch adv =
        attack::run_attack(model, batch, attack::parse_attack_spec(spec));
    const Tensor& x = batch.images.pixels;
    const Tensor& y = adv.images.pixels;
    CHECK(linf(y, x) <= attack::parse_attack_spec(spec).epsilon + 1e-6);
    CHECK(y.min() >= 0.0f);
    CHECK(y.max() <= 1.0f);
    for (int64_t i = 0; i < y.size(); ++i) {
      const double t = 255.0 * y[i];
      CHECK(std::abs(t - std::lround(t)) < 1e-3);
    }
  }
}

TEST_CASE("attack efficacy ordering on the synthetic corpus") {
  Workbench& wb = Workbench::get();
  victim::VictimModel& model = wb.victim();
  const data::LabeledBatch& test = wb.cls.test;

  const double clean = oa_on(model, test.images.pixels, test.labels);
  attack::AdversarialBatch f = attack::run_attack(
      model, test, attack::parse_attack_spec("fgsm:eps=8/255"));
  attack::AdversarialBatch i = attack::run_attack(
      model, test, attack::parse_attack_spec("ifgsm:eps=8/255,steps=10"));
  const double oa_f = oa_on(model, f.images.pixels, test.labels);
  const double oa_i = oa_on(model, i.images.pixels, test.labels);

  CHECK(oa_f <= clean);
  CHECK(oa_i <= oa_f);
  CHECK(oa_f < 0.9 * clean);  // the one-step attack already bites
}

TEST_CASE("tpgd starts inside the ball and climbs its KL objective") {
  // Convex objective (log-sum-exp of affine) + sign ascent: every step is
  // guaranteed non-decreasing, so the trace must be monotone.
  auto fwd = linear_toy({2.0f, 0.0f, 0.0f, -1.0f});
  data::LabeledBatch b = toy_batch(0.4f, 0.6f, 0);
  attack::AttackConfig cfg =
      attack::parse_attack_spec("tpgd:eps=0.3,steps=12,alpha=0.02,seed=5");
  attack::AdversarialBatch adv = attack::tpgd(fwd, b, cfg);
  REQUIRE(adv.kl_trace.size() == 13);
  for (size_t k = 1; k < adv.kl_trace.size(); ++k)
    CHECK(adv.kl_trace[k] >= adv.kl_trace[k - 1] - 1e-9);
  CHECK(adv.kl_trace.back() > adv.kl_trace.front());

  // eps=0: the random start and every projection collapse onto x.
  attack::AttackConfig zero = attack::parse_attack_spec("tpgd:eps=0,steps=5");
  attack::AdversarialBatch same = attack::tpgd(fwd, b, zero);
  CHECK(same.images.pixels[0] == b.images.pixels[0]);
  CHECK(same.images.pixels[1] == b.images.pixels[1]);

  // Same seed, same bytes; new seed, new random start.
  Workbench& wb = Workbench::get();
  victim::VictimModel& model = wb.victim();
  data::LabeledBatch batch = sub_batch(wb.cls.test, 0, 6);
  attack::AttackConfig s3 = attack::parse_attack_spec("tpgd:eps=8/255,steps=4,seed=3");
  attack::AdversarialBatch r1 = attack::run_attack(model, batch, s3);
  attack::AdversarialBatch r2 = attack::run_attack(model, batch, s3);
  for (int64_t i = 0; i < r1.images.pixels.size(); ++i)
    CHECK(r1.images.pixels[i] == r2.images.pixels[i]);
  attack::AdversarialBatch r3 = attack::run_attack(
      model, batch, attack::parse_attack_spec("tpgd:eps=8/255,steps=4,seed=4"));
  CHECK(linf(r1.images.pixels, r3.images.pixels) > 0.0);
}

TEST_CASE("cw descends its objective and mu=0 leaves the input alone") {
  auto fwd = linear_toy({1.0f, 0.0f, 0.0f, 1.0f});
  data::LabeledBatch b = toy_batch(0.4f, 0.6f, 0);

  attack::AttackConfig still = attack::parse_attack_spec("cw:mu=0,steps=6");
  attack::AdversarialBatch fixed = attack::cw(fwd, b, still);
  CHECK(fixed.images.pixels[0] == b.images.pixels[0]);
  CHECK(fixed.images.pixels[1] == b.images.pixels[1]);

  attack::AttackConfig cfg = attack::parse_attack_spec("cw:mu=5,steps=10,alpha=0.001");
  attack::AdversarialBatch adv = attack::cw(fwd, b, cfg);
  REQUIRE(adv.objective_trace.size() == 11);
  for (size_t k = 1; k < adv.objective_trace.size(); ++k)
    CHECK(adv.objective_trace[k] <= adv.objective_trace[k - 1] + 1e-4);
  CHECK(adv.objective_trace.back() < adv.objective_trace.front());

  // A NaN model is a numerical error, not a silent garbage batch.
  attack::ForwardFn naan = [](const nn::Var& xv) {
    Tensor t({xv->value.dim(0), 2}, std::numeric_limits<float>::quiet_NaN());
    return nn::make_const(t);
  };
  CHECK_THROWS_AS(attack::cw(naan, b, cfg), NumericalError);
}

TEST_CASE("cw at matched compute beats fgsm on the synthetic corpus") {
  Workbench& wb = Workbench::get();
  victim::VictimModel& model = wb.victim();
  const data::LabeledBatch& test = wb.cls.test;

  attack::AdversarialBatch f = attack::run_attack(
      model, test, attack::parse_attack_spec("fgsm:eps=8/255"));
  attack::AdversarialBatch c = attack::run_attack(
      model, test, attack::parse_attack_spec("cw:steps=20,mu=1000,alpha=1"));
  CHECK(oa_on(model, c.images.pixels, test.labels) <=
        oa_on(model, f.images.pixels, test.labels));
}

TEST_CASE("momentum accumulation moves pixels by the hand-derived pattern") {
  // Constant gradient direction [3,1]: g1 = [3,1]/4, g1/max = [1,1/3], so one
  // step moves [alpha, alpha/3] = [6/255, 2/255].
  auto fwd = linear_toy({0.0f, 0.0f, 3.0f, 1.0f});
  data::LabeledBatch b = toy_batch(128.0f / 255, 64.0f / 255, 0);
  attack::AttackConfig cfg =
      attack::parse_attack_spec("momentum_mix:eps=6/255,steps=1");
  attack::AdversarialBatch adv = attack::momentum_mix_attack(fwd, b, cfg);
  CHECK(adv.images.pixels[0] ==
        doctest::Approx(128.0 / 255 + 6.0 / 255).epsilon(1e-6));
  CHECK(adv.images.pixels[1] ==
        doctest::Approx(64.0 / 255 + 2.0 / 255).epsilon(1e-6));

  // Constant-sign gradient over several steps: every pixel saturates at
  // alpha per step, i.e. the full budget after `steps` steps.
  auto up = linear_toy({0.0f, 0.0f, 1.0f, 1.0f});
  attack::AttackConfig multi =
      attack::parse_attack_spec("momentum_mix:eps=8/255,steps=4");
  attack::AdversarialBatch ramp = attack::momentum_mix_attack(up, b, multi);
  CHECK(ramp.images.pixels[0] ==
        doctest::Approx(128.0 / 255 + 8.0 / 255).epsilon(1e-6));

  // Zero gradient: momentum never updates, sample stays put, flag set.
  auto flat = linear_toy({0.0f, 0.0f, 0.0f, 0.0f});
  attack::AdversarialBatch still = attack::momentum_mix_attack(flat, b, cfg);
  CHECK(still.zero_gradient);
  CHECK(still.images.pixels[0] == b.images.pixels[0]);
}

TEST_CASE("momentum_mix transfers from a surrogate to an unseen victim") {
  Workbench& wb = Workbench::get();
  victim::VictimModel& surrogate = wb.victim();
  victim::VictimModel& other = wb.victim_b();  // independently initialized

  const data::LabeledBatch& test = wb.cls.test;
  const double clean = oa_on(other, test.images.pixels, test.labels);
  attack::AdversarialBatch adv = attack::run_attack(
      surrogate, test,
      attack::parse_attack_spec(
          "momentum_mix:eps=16/255,steps=10,alpha=8/255,mix=mixup,seed=2"));
  const double attacked = oa_on(other, adv.images.pixels, test.labels);
  CHECK(clean - attacked >= 0.20);
}

TEST_CASE("registry dispatches and accepts plugins") {
  Workbench& wb = Workbench::get();
  victim::VictimModel& model = wb.victim();
  data::LabeledBatch batch = sub_batch(wb.cls.test, 0, 2);

  attack::AttackConfig cfg;
  cfg.method = "does_not_exist";
  CHECK_THROWS_AS(attack::run_attack(model, batch, cfg), ConfigError);

  data::LabeledBatch wrong = batch;
  wrong.task = data::Task::segmentation;
  CHECK_THROWS_AS(attack::run_attack(model, wrong,
                                     attack::parse_attack_spec("fgsm")),
                  CompatibilityError);

  static bool registered = false;
  if (!registered) {
    attack::register_attack(
        "echo", [](const attack::ForwardFn&, const data::LabeledBatch& b,
                   const attack::AttackConfig& c) {
          attack::AdversarialBatch out;
          out.images = b.images;
          out.origin_ids = b.images.ids;
          out.config_hash = c.hash();
          out.spec = c.spec;
          return out;
        });
    registered = true;
  }
  attack::AttackConfig echo;
  echo.method = "echo";
  attack::AdversarialBatch out = attack::run_attack(model, batch, echo);
  CHECK(out.images.pixels[0] == batch.images.pixels[0]);
  auto names = attack::registered_attacks();
  CHECK(std::find(names.begin(), names.end(), "echo") != names.end());
  CHECK_THROWS_AS(attack::register_attack("fgsm", attack::fgsm), ConfigError);
}

TEST_CASE("adversarial batches persist as PNG plus sidecar and round-trip") {
  Workbench& wb = Workbench::get();
  victim::VictimModel& model = wb.victim();
  data::LabeledBatch batch = sub_batch(wb.cls.test, 0, 5);
  attack::AdversarialBatch adv = attack::run_attack(
      model, batch, attack::parse_attack_spec("ifgsm:eps=8/255,steps=3"));

  auto dir = wb.root / "adv_roundtrip";
  attack::save_adversarial(adv, dir);
  CHECK(std::filesystem::exists(dir / "adversarial.json"));

  attack::AdversarialBatch back = attack::load_adversarial(dir);
  CHECK(back.config_hash == adv.config_hash);
  CHECK(back.spec == adv.spec);
  CHECK(back.origin_ids == adv.origin_ids);
  REQUIRE(back.images.pixels.same_shape(adv.images.pixels));
  for (int64_t i = 0; i < back.images.pixels.size(); ++i)
    CHECK(back.images.pixels[i] == adv.images.pixels[i]);

  CHECK_THROWS_AS(attack::load_adversarial(wb.root / "missing_dir"), IoError);
  // Corrupt sidecar -> schema error.
  auto bad = wb.root / "adv_bad";
  std::filesystem::create_directories(bad);
  std::ofstream(bad / "adversarial.json") << "{not json";
  CHECK_THROWS_AS(attack::load_adversarial(bad), SchemaError);
}

TEST_SUITE_END();
