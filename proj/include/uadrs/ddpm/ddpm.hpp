#pragma once

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "uadrs/core/rng.hpp"
#include "uadrs/data/dataset.hpp"
#include "uadrs/nn/layers.hpp"

namespace uadrs::ddpm {

/// beta[t-1] = β_t etc.; arrays kept in double so ᾱ products stay exact
/// enough for T=1000.
struct NoiseSchedule {
  int T = 0;
  std::string kind;
  double beta_start = 0.0, beta_end = 0.0;
  std::vector<double> beta, alpha, alpha_bar;

  /// ᾱ_t with the ᾱ_0 = 1 convention.
  double abar(int t) const;
  void check_t(int t) const;  // 1 <= t <= T
};

/// kinds: "linear" (β linear in t, the paper-default for T=1000),
/// "scaled_linear" (endpoints rescaled by 1000/T so short chains still end
/// near-pure noise), "cosine" (Nichol–Dhariwal ᾱ cosine; ignores the bounds).
NoiseSchedule make_schedule(int T, double beta_start, double beta_end,
                            const std::string& kind);

/// [0,1] images <-> the [-1,1] domain diffusion runs in.
Tensor to_diffusion(const Tensor& unit_range);
Tensor from_diffusion(const Tensor& internal);  // clips to [0,1]

/// x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps, elementwise.
Tensor diffuse_closed_form(const Tensor& x0, int t, const Tensor& eps,
                           const NoiseSchedule& s);

/// One forward kernel sample q(x_t | x_{t-1}).
Tensor diffuse_step(const Tensor& x_prev, int t, const NoiseSchedule& s,
                    Rng& rng);

/// eps-predictor: (x_t, per-sample t) -> predicted noise.
using Predictor =
    std::function<Tensor(const Tensor&, const std::vector<int>&)>;

/// x_{t-1} = (x_t - beta_t/sqrt(1-abar_t) * eps_hat) / sqrt(alpha_t)
///           + sigma_t z,  sigma_t^2 = beta_tilde_t, z = 0 at t = 1.
Tensor denoise_step(const Tensor& x_t, int t, const Predictor& eps_hat,
                    const NoiseSchedule& s, Rng& rng,
                    bool force_zero_sigma = false);

/// Small U-Net eps-predictor with sinusoidal timestep embedding, three
/// resolutions, residual blocks and skip concatenation.
class Denoiser {
 public:
  Denoiser(int in_ch, int base_channels, int time_dim, uint64_t seed);

  nn::Var forward(const nn::Var& x, const std::vector<int>& t, int T) const;
  Tensor predict(const Tensor& x, const std::vector<int>& t, int T) const;
  Predictor predictor(int T) const;

  std::vector<nn::NamedParam> parameters() const;
  int in_channels() const { return in_ch_; }
  int base_channels() const { return base_; }
  int time_dim() const { return time_dim_; }

 private:
  Tensor time_embedding(const std::vector<int>& t, int T) const;

  int in_ch_, base_, time_dim_;

  struct ResBlock {
    std::shared_ptr<nn::GroupNormLayer> gn1, gn2;
    std::shared_ptr<nn::Conv2dLayer> conv1, conv2, skip;  // skip null if cin==cout
    std::shared_ptr<nn::LinearLayer> temb;
    nn::Var operator()(const nn::Var& x, const nn::Var& emb) const;
    void collect(const std::string& prefix,
                 std::vector<nn::NamedParam>& out) const;
  };
  ResBlock make_block(int cin, int cout, Rng& rng);

  std::shared_ptr<nn::LinearLayer> temb1_, temb2_;
  std::shared_ptr<nn::Conv2dLayer> stem_;
  ResBlock rb_d0_, rb_d1_, rb_m1_, rb_m2_, rb_u1_, rb_u0_;
  std::shared_ptr<nn::Conv2dLayer> down0_, down1_, upc1_, upc0_;
  std::shared_ptr<nn::GroupNormLayer> head_gn_;
  std::shared_ptr<nn::Conv2dLayer> head_;
};

/// Per-item t ~ U[1,T] and eps ~ N(0,I); mean squared error between eps and
/// the prediction (lambda(t) = 1). Differentiable through the denoiser.
nn::Var ddpm_loss(const Denoiser& net, const Tensor& x0_internal,
                  const NoiseSchedule& s, Rng& rng);

struct DiffusionTrainConfig {
  int epochs = 30;
  int batch_size = 16;
  float lr = 1e-3f;
  uint64_t seed = 0;
  int base_channels = 32;
  int time_dim = 64;
  int holdout = 16;  // held-out images for the fixed-noise loss curve
};

/// Denoiser + embedded schedule + provenance; self-describing archive.
struct DiffusionModel {
  NoiseSchedule schedule;
  std::shared_ptr<Denoiser> net;
  std::shared_ptr<nlohmann::json> meta;

  Predictor predictor() const;
  void save(const std::filesystem::path& path) const;
  static DiffusionModel load(const std::filesystem::path& path);
};

/// Trains (or resumes, when `resume_from` names an existing checkpoint) up
/// to cfg.epochs total epochs. The held-out loss uses frozen (t, eps) draws
/// so the curve is comparable across epochs. Resuming reproduces the
/// uninterrupted run bit for bit.
DiffusionModel train_diffusion(const data::DatasetSpec& spec,
                               const data::DatasetSplits& splits,
                               const NoiseSchedule& schedule,
                               const DiffusionTrainConfig& cfg,
                               const std::filesystem::path& checkpoint_path,
                               const std::filesystem::path& resume_from = {});

/// Full reverse chain from pure noise; returns [0,1] images.
data::ImageBatch sample_unconditional(const DiffusionModel& model, int n,
                                      int height, int width, Rng& rng);

}  // namespace uadrs::ddpm
