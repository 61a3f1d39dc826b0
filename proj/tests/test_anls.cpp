#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "uadrs/anls/anls.hpp"
#include "uadrs/attack/attack.hpp"
#include "uadrs/core/rng.hpp"
#include "uadrs/eval/metrics.hpp"

using namespace uadrs;
using test::Workbench;

namespace {

Tensor feature_rows(std::initializer_list<std::initializer_list<float>> rows) {
  const int n = static_cast<int>(rows.size());
  const int d = static_cast<int>(rows.begin()->size());
  Tensor t({n, d});
  int64_t i = 0;
  for (const auto& row : rows)
    for (float v : row) t[i++] = v;
  return t;
}

anls::FeatureGaussian gaussian_1d(double mu, double var) {
  anls::FeatureGaussian g;
  g.d = 1;
  g.n = 2;
  g.mu = {mu};
  g.sigma = {var};
  return g;
}

}  // namespace

TEST_SUITE_BEGIN("anls");

TEST_CASE("gaussian fit matches the hand-computed sample covariance") {
  anls::FeatureGaussian g =
      anls::fit_feature_gaussian(feature_rows({{0, 0}, {2, 2}}));
  CHECK(g.n == 2);
  CHECK(g.d == 2);
  CHECK(g.mu[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.mu[1] == doctest::Approx(1.0).epsilon(1e-12));
  // cov = [[2,2],[2,2]] plus 1e-6 jitter on the diagonal
  CHECK(g.sigma[0] == doctest::Approx(2.0 + 1e-6).epsilon(1e-12));
  CHECK(g.sigma[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(g.sigma[2] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(g.sigma[3] == doctest::Approx(2.0 + 1e-6).epsilon(1e-12));

  anls::FeatureGaussian flat =
      anls::fit_feature_gaussian(feature_rows({{3, 1}, {3, 1}, {3, 1}}));
  CHECK(flat.sigma[0] == doctest::Approx(1e-6));
  CHECK(flat.sigma[1] == 0.0);
  CHECK(flat.sigma[3] == doctest::Approx(1e-6));

  CHECK_THROWS_AS(anls::fit_feature_gaussian(feature_rows({{1, 2}})),
                  InsufficientDataError);
  Tensor bad = feature_rows({{1, 2}, {3, 4}});
  bad[2] = std::nanf("");
  CHECK_THROWS_AS(anls::fit_feature_gaussian(bad), DataError);
  CHECK_THROWS_AS(anls::fit_feature_gaussian(Tensor({2, 2, 2})), ShapeError);
}

TEST_CASE("frechet distance reproduces its closed forms") {
  // identical distributions
  anls::FeatureGaussian a =
      anls::fit_feature_gaussian(feature_rows({{1, 0}, {0, 1}, {2, 2}}));
  CHECK(anls::frechet_distance(a, a) <= 1e-8);

  // 1-D N(0,1) vs N(1,1): 1^2 + (1 + 1 - 2*1) = 1
  CHECK(anls::frechet_distance(gaussian_1d(0, 1), gaussian_1d(1, 1)) ==
        doctest::Approx(1.0).epsilon(1e-10));

  // diagonal 2-D: mu equal, diag(1,4) vs diag(4,1):
  // tr residue = 5 + 5 - 2*tr(sqrt(diag(4,4))) = 2
  anls::FeatureGaussian da, db;
  da.d = db.d = 2;
  da.n = db.n = 8;
  da.mu = {0.5, -0.25};
  db.mu = {0.5, -0.25};
  da.sigma = {1, 0, 0, 4};
  db.sigma = {4, 0, 0, 1};
  CHECK(anls::frechet_distance(da, db) == doctest::Approx(2.0).epsilon(1e-8));

  // plain-norm variant keeps the mean term unsquared
  anls::FeatureGaussian shifted = db;
  shifted.mu = {2.5, -0.25};  // ||dmu|| = 2
  const double sq = anls::frechet_distance(da, shifted, anls::FidNorm::squared);
  const double pl = anls::frechet_distance(da, shifted, anls::FidNorm::plain);
  CHECK(sq == doctest::Approx(4.0 + 2.0).epsilon(1e-8));
  CHECK(pl == doctest::Approx(2.0 + 2.0).epsilon(1e-8));

  // symmetry on a non-diagonal pair
  anls::FeatureGaussian ra = anls::fit_feature_gaussian(
      feature_rows({{0, 1}, {3, 2}, {1, 1}, {2, 5}}));
  anls::FeatureGaussian rb = anls::fit_feature_gaussian(
      feature_rows({{5, 0}, {1, 2}, {4, 4}, {0, 1}}));
  CHECK(anls::frechet_distance(ra, rb) ==
        doctest::Approx(anls::frechet_distance(rb, ra)).epsilon(1e-10));
  CHECK(anls::frechet_distance(ra, rb) >= 0.0);

  anls::FeatureGaussian wrong = gaussian_1d(0, 1);
  CHECK_THROWS_AS(anls::frechet_distance(ra, wrong), ShapeError);
}

TEST_CASE("level choice is the exact argmin with smaller-level tie-break") {
  CHECK(anls::choose_level({10, 20, 30}, {5.0, 3.0, 4.0}) == 20);
  CHECK(anls::choose_level({20, 10}, {3.0, 3.0}) == 10);
  CHECK(anls::choose_level({40}, {9.0}) == 40);
  CHECK_THROWS_AS(anls::choose_level({}, {}), ConfigError);
  CHECK_THROWS_AS(anls::choose_level({1, 2}, {1.0}), ShapeError);

  // randomized agreement with a brute-force scan
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> levels;
    std::vector<double> gamma;
    const int k = 2 + static_cast<int>(rng.randint(0, 6));
    for (int i = 0; i < k; ++i) {
      levels.push_back(static_cast<int>(rng.randint(1, 200)));
      gamma.push_back(static_cast<double>(rng.randint(0, 4)));  // force ties
    }
    int want = levels[0];
    double wg = gamma[0];
    for (int i = 1; i < k; ++i)
      if (gamma[i] < wg || (gamma[i] == wg && levels[i] < want)) {
        want = levels[i];
        wg = gamma[i];
      }
    CHECK(anls::choose_level(levels, gamma) == want);
  }
}

TEST_CASE("clean feature halves are closer than clean vs adversarial") {
  Workbench& wb = Workbench::get();
  victim::VictimModel& model = wb.victim();
  const data::LabeledBatch& test = wb.cls.test;

  Tensor feats = model.encoder_features(test.images.pixels);
  const int n = feats.dim(0), d = feats.dim(1);
  // samples arrive class-ordered, so interleave to keep both halves balanced
  Tensor first({n - n / 2, d}), second({n / 2, d});
  for (int i = 0; i < n; ++i) {
    Tensor& dst = (i % 2 == 0) ? first : second;
    const int64_t row = i / 2;
    for (int j = 0; j < d; ++j)
      dst[row * d + j] = feats[static_cast<int64_t>(i) * d + j];
  }

  attack::AdversarialBatch adv = attack::run_attack(
      model, test, attack::parse_attack_spec("ifgsm:eps=8/255,steps=10"));
  Tensor adv_feats = model.encoder_features(adv.images.pixels);

  anls::FeatureGaussian g1 = anls::fit_feature_gaussian(first);
  anls::FeatureGaussian g2 = anls::fit_feature_gaussian(second);
  anls::FeatureGaussian gc = anls::fit_feature_gaussian(feats);
  anls::FeatureGaussian ga = anls::fit_feature_gaussian(adv_feats);
  CHECK(anls::frechet_distance(g1, g2) < anls::frechet_distance(gc, ga));
}

TEST_CASE("select_noise_level walks the grid and reports per-level numbers") {
  Workbench& wb = Workbench::get();
  victim::VictimModel& model = wb.victim();

  ddpm::DiffusionModel toy;
  toy.schedule = ddpm::make_schedule(40, 1e-4, 0.02, "scaled_linear");
  toy.net = std::make_shared<ddpm::Denoiser>(3, 8, 16, 5);
  toy.meta = std::make_shared<nlohmann::json>();

  data::LabeledBatch subset;
  subset.images = wb.cls.test.images.slice(0, 12);
  subset.labels = wb.cls.test.label_slice(0, 12);

  anls::AnlsConfig cfg;
  cfg.levels = {1, 30};
  cfg.seed = 17;
  cfg.clean_cap = 48;
  anls::AnlsReport rep = anls::select_noise_level(
      model, toy, wb.cls.train.images, subset, cfg);

  CHECK(rep.levels == std::vector<int>{1, 30});
  REQUIRE(rep.gamma.size() == 2);
  REQUIRE(rep.subset_oa.size() == 2);
  for (double g : rep.gamma) {
    CHECK(std::isfinite(g));
    CHECK(g >= 0.0);
  }
  for (double oa : rep.subset_oa) {
    CHECK(oa >= 0.0);
    CHECK(oa <= 1.0);
  }
  CHECK((rep.chosen == 1 || rep.chosen == 30));
  CHECK(rep.chosen == anls::choose_level(rep.levels, rep.gamma));
  CHECK(rep.subset_n == 12);

  // a wildly over-diffused latent scrambles features far from clean ones:
  // the barely-noised level must rank better under an identity-ish chain
  CHECK(rep.chosen == 1);

  const std::string csv = anls::report_csv(rep);
  CHECK(csv.rfind("T_m,gamma,subset_oa\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  // failure reporting names the level
  anls::AnlsConfig bad = cfg;
  bad.levels = {1, 99};
  try {
    anls::select_noise_level(model, toy, wb.cls.train.images, subset, bad);
    FAIL("expected an error for an out-of-range level");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("99") != std::string::npos);
    CHECK(e.exit_code() == ExitCode::failure);  // RangeError underneath
  }
  bad.levels = {4, 4};
  CHECK_THROWS_AS(anls::select_noise_level(model, toy, wb.cls.train.images,
                                           subset, bad),
                  ConfigError);
  data::LabeledBatch tiny;
  tiny.images = wb.cls.test.images.slice(0, 1);
  tiny.labels = wb.cls.test.label_slice(0, 1);
  CHECK_THROWS_AS(
      anls::select_noise_level(model, toy, wb.cls.train.images, tiny, cfg),
      InsufficientDataError);
}

TEST_CASE("gaussian cache round-trips exactly") {
  anls::FeatureGaussian g = anls::fit_feature_gaussian(
      feature_rows({{0.1f, 2.5f}, {4.25f, -1.0f}, {3.0f, 0.0f}}));
  const auto path =
      std::filesystem::temp_directory_path() / "uadrs_gauss_cache.json";
  std::filesystem::remove(path);
  anls::save_gaussian(g, path);
  anls::FeatureGaussian back = anls::load_gaussian(path);
  CHECK(back.d == g.d);
  CHECK(back.n == g.n);
  for (size_t i = 0; i < g.mu.size(); ++i) CHECK(back.mu[i] == g.mu[i]);
  for (size_t i = 0; i < g.sigma.size(); ++i)
    CHECK(back.sigma[i] == g.sigma[i]);
  CHECK(anls::frechet_distance(g, back) <= 1e-12);

  CHECK_THROWS_AS(anls::load_gaussian(path.parent_path() / "absent.json"),
                  IoError);
}

TEST_CASE("spearman rank correlation behaves at the poles and on ties") {
  CHECK(eval::spearman({1, 2, 3, 4}, {10, 20, 30, 40}) ==
        doctest::Approx(1.0));
  CHECK(eval::spearman({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
  // hand value: x = (1,2,3), y = (2,2,5) -> ranks y = (1.5, 1.5, 3)
  // cov = 1.5, sd_x = sqrt(2), sd_y = sqrt(1.5)
  CHECK(eval::spearman({1, 2, 3}, {2, 2, 5}) ==
        doctest::Approx(1.5 / std::sqrt(2.0 * 1.5)).epsilon(1e-12));
  CHECK_THROWS_AS(eval::spearman({1, 2}, {1}), ShapeError);
  CHECK_THROWS_AS(eval::spearman({1, 1, 1}, {1, 2, 3}), NumericalError);
}

TEST_SUITE_END();
