#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "uadrs/anls/anls.hpp"
#include "uadrs/data/manifest.hpp"
#include "uadrs/nn/ops.hpp"
#include "uadrs/eval/metrics.hpp"
#include "uadrs/purify/purify.hpp"

namespace uadrs::anls {

FeatureGaussian fit_feature_gaussian(const Tensor& features) {
  if (features.rank() != 2)
    throw ShapeError("feature matrix must be [N,D], got " +
                     features.shape_str());
  const int n = features.dim(0);
  const int d = features.dim(1);
  if (n < 2)
    throw InsufficientDataError(
        "need at least 2 feature rows to fit a Gaussian, got " +
        std::to_string(n));
  if (!features.all_finite())
    throw ValidationError("non-finite values in feature matrix");

  FeatureGaussian g;
  g.d = d;
  g.n = n;
  g.mu.assign(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      g.mu[static_cast<size_t>(j)] +=
          features[static_cast<int64_t>(i) * d + j];
  for (double& m : g.mu) m /= n;

  g.sigma.assign(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double cj = features[static_cast<int64_t>(i) * d + j] -
                        g.mu[static_cast<size_t>(j)];
      for (int k = j; k < d; ++k) {
        const double ck = features[static_cast<int64_t>(i) * d + k] -
                          g.mu[static_cast<size_t>(k)];
        g.sigma[static_cast<size_t>(j) * d + k] += cj * ck;
      }
    }
  for (int j = 0; j < d; ++j)
    for (int k = j; k < d; ++k) {
      double v = g.sigma[static_cast<size_t>(j) * d + k] / (n - 1);
      if (j == k) v += 1e-6;
      g.sigma[static_cast<size_t>(j) * d + k] = v;
      g.sigma[static_cast<size_t>(k) * d + j] = v;
    }
  return g;
}

namespace {

Eigen::MatrixXd as_eigen(const std::vector<double>& m, int d) {
  Eigen::MatrixXd out(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out(i, j) = m[static_cast<size_t>(i) * d + j];
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success)
    throw NumericalError(std::string("eigendecomposition failed for ") + what);
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FeatureGaussian& a, const FeatureGaussian& b,
                        FidNorm norm) {
  if (a.d != b.d)
    throw ShapeError("feature dimension mismatch: " + std::to_string(a.d) +
                     " vs " + std::to_string(b.d));
  const int d = a.d;

  double mean_sq = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = a.mu[static_cast<size_t>(i)] - b.mu[static_cast<size_t>(i)];
    mean_sq += diff * diff;
  }

  const Eigen::MatrixXd sa = as_eigen(a.sigma, d);
  const Eigen::MatrixXd sb = as_eigen(b.sigma, d);
  const Eigen::MatrixXd ra = psd_sqrt(sa, "covariance a");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * ((ra * sb * ra) + (ra * sb * ra).transpose()));
  if (es.info() != Eigen::Success)
    throw NumericalError("eigendecomposition failed for covariance product");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  double residue = sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  if (residue < 0.0) residue = 0.0;  // numerical dust on identical inputs

  const double mean_term =
      norm == FidNorm::squared ? mean_sq : std::sqrt(mean_sq);
  const double gamma = mean_term + residue;
  if (!std::isfinite(gamma))
    throw NumericalError("Frechet distance is not finite");
  return gamma;
}

int choose_level(const std::vector<int>& levels,
                 const std::vector<double>& gamma) {
  if (levels.empty()) throw ConfigError("no candidate noise levels");
  if (levels.size() != gamma.size())
    throw ShapeError("levels and gamma lengths differ");
  size_t best = 0;
  for (size_t i = 1; i < levels.size(); ++i) {
    if (gamma[i] < gamma[best] ||
        (gamma[i] == gamma[best] && levels[i] < levels[best]))
      best = i;
  }
  return levels[best];
}

AnlsReport select_noise_level(const victim::VictimModel& victim,
                              const ddpm::DiffusionModel& diffusion,
                              const data::ImageBatch& clean_train,
                              const data::LabeledBatch& adv_subset,
                              const AnlsConfig& cfg) {
  if (cfg.levels.empty()) throw ConfigError("no candidate noise levels");
  {
    std::set<int> seen;
    for (int L : cfg.levels)
      if (!seen.insert(L).second)
        throw ConfigError("duplicate candidate level " + std::to_string(L));
  }
  if (adv_subset.images.n() < 2)
    throw InsufficientDataError("ANLS subset needs at least 2 samples");

  data::ImageBatch clean = clean_train;
  if (cfg.clean_cap > 0 && clean.n() > cfg.clean_cap)
    clean = clean.slice(0, cfg.clean_cap);
  FeatureGaussian clean_g =
      fit_feature_gaussian(victim.encoder_features(clean.pixels));

  AnlsReport report;
  report.levels = cfg.levels;
  report.seed = cfg.seed;
  report.subset_n = adv_subset.images.n();

  for (int L : cfg.levels) {
    purify::PurifyConfig pc;
    pc.t_m = L;
    pc.seed = cfg.seed;
    purify::PurifiedBatch pur;
    try {
      pur = purify::purify(diffusion, adv_subset.images, pc, "anls-subset");
    } catch (const Error& e) {
      throw Error("ANLS purification at noise level " + std::to_string(L) +
                      " failed: " + e.what(),
                  e.exit_code());
    }
    FeatureGaussian g =
        fit_feature_gaussian(victim.encoder_features(pur.images.pixels));
    report.gamma.push_back(frechet_distance(clean_g, g, cfg.norm));
    report.subset_oa.push_back(eval::overall_accuracy(
        nn::argmax_classes(victim.forward_logits(pur.images.pixels)),
        adv_subset.labels));
  }

  report.chosen = choose_level(report.levels, report.gamma);
  return report;
}

std::string report_csv(const AnlsReport& r) {
  std::string out = "T_m,gamma,subset_oa\n";
  char row[96];
  for (size_t i = 0; i < r.levels.size(); ++i) {
    std::snprintf(row, sizeof(row), "%d,%.17g,%.17g\n", r.levels[i],
                  r.gamma[i], r.subset_oa[i]);
    out += row;
  }
  return out;
}

void save_report_csv(const AnlsReport& r, const std::filesystem::path& path) {
  data::atomic_write_text(path, report_csv(r));
}

void save_gaussian(const FeatureGaussian& g,
                   const std::filesystem::path& path) {
  nlohmann::json j = {
      {"kind", "feature_gaussian"}, {"d", g.d}, {"n", g.n},
      {"mu", g.mu},                 {"sigma", g.sigma},
  };
  data::atomic_write_text(path, data::canonical_json(j));
}

FeatureGaussian load_gaussian(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw IoError("no cached Gaussian at " + path.string());
  nlohmann::json j;
  {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("malformed Gaussian cache " + path.string() + ": " +
                        e.what());
    }
  }
  FeatureGaussian g;
  try {
    if (j.at("kind") != "feature_gaussian")
      throw SchemaError("not a Gaussian cache: " + path.string());
    g.d = j.at("d").get<int>();
    g.n = j.at("n").get<int>();
    g.mu = j.at("mu").get<std::vector<double>>();
    g.sigma = j.at("sigma").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("Gaussian cache missing fields: " +
                      std::string(e.what()));
  }
  if (g.d < 1 || g.mu.size() != static_cast<size_t>(g.d) ||
      g.sigma.size() != static_cast<size_t>(g.d) * g.d)
    throw SchemaError("Gaussian cache has inconsistent dimensions");
  return g;
}

}  // namespace uadrs::anls
