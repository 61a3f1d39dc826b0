#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uadrs/data/dataset.hpp"
#include "uadrs/ddpm/ddpm.hpp"
#include "uadrs/victim/victim.hpp"

namespace uadrs::anls {

/// Sample mean and covariance of a feature set, in double so the Fréchet
/// algebra below is not at the mercy of float accumulation.
struct FeatureGaussian {
  std::vector<double> mu;     // D
  std::vector<double> sigma;  // D*D, row-major, symmetric
  int d = 0;
  int n = 0;
};

/// Sample covariance with denominator N-1 plus 1e-6 diagonal jitter.
FeatureGaussian fit_feature_gaussian(const Tensor& features);  // [N, D]

/// The paper prints the mean term unsquared; standard Fréchet distance
/// squares it. `squared` is the default, `plain` the paper-literal variant.
enum class FidNorm { squared, plain };

/// gamma = ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}), square root via
/// eigendecomposition of the symmetrized product, negative residue clamped.
double frechet_distance(const FeatureGaussian& a, const FeatureGaussian& b,
                        FidNorm norm = FidNorm::squared);

/// Exact argmin over (levels, gamma) pairs; ties break toward the smaller
/// level. Returns the chosen level.
int choose_level(const std::vector<int>& levels,
                 const std::vector<double>& gamma);

struct AnlsReport {
  std::vector<int> levels;
  std::vector<double> gamma;      // parallel to levels
  std::vector<double> subset_oa;  // victim OA on the purified subset
  int chosen = 0;
  int subset_n = 0;
  uint64_t seed = 0;
};

struct AnlsConfig {
  std::vector<int> levels;
  uint64_t seed = 0;
  FidNorm norm = FidNorm::squared;
  int clean_cap = 0;  // 0 = fit the clean Gaussian on everything given
};

/// Algorithm: fit the clean Gaussian once, purify the adversarial subset at
/// every candidate level (shared jump noise), fit per-level Gaussians and
/// return the argmin-gamma level. A purification failure aborts with the
/// offending level named in the error.
AnlsReport select_noise_level(const victim::VictimModel& victim,
                              const ddpm::DiffusionModel& diffusion,
                              const data::ImageBatch& clean_train,
                              const data::LabeledBatch& adv_subset,
                              const AnlsConfig& cfg);

/// CSV of (T_m, gamma, subset OA) rows in report order.
std::string report_csv(const AnlsReport& r);
void save_report_csv(const AnlsReport& r, const std::filesystem::path& path);

/// On-disk cache for the clean-feature Gaussian (exact double round-trip).
void save_gaussian(const FeatureGaussian& g, const std::filesystem::path& path);
FeatureGaussian load_gaussian(const std::filesystem::path& path);

}  // namespace uadrs::anls
