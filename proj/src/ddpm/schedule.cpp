#include <algorithm>
#include <cmath>

#include "uadrs/core/error.hpp"
#include "uadrs/ddpm/ddpm.hpp"

namespace uadrs::ddpm {

double NoiseSchedule::abar(int t) const {
  if (t == 0) return 1.0;
  check_t(t);
  return alpha_bar[static_cast<size_t>(t - 1)];
}

void NoiseSchedule::check_t(int t) const {
  if (t < 1 || t > T)
    throw RangeError("timestep " + std::to_string(t) + " outside [1," +
                     std::to_string(T) + "]");
}

namespace {

std::vector<double> linear_betas(int T, double lo, double hi) {
  std::vector<double> beta(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t)
    beta[static_cast<size_t>(t)] =
        T == 1 ? lo : lo + (hi - lo) * static_cast<double>(t) / (T - 1);
  return beta;
}

std::vector<double> cosine_betas(int T) {
  const double s = 0.008;
  auto f = [&](double u) {
    double c = std::cos((u + s) / (1.0 + s) * M_PI / 2.0);
    return c * c;
  };
  const double f0 = f(0.0);
  std::vector<double> beta(static_cast<size_t>(T));
  double prev = 1.0;
  for (int t = 1; t <= T; ++t) {
    double ab = f(static_cast<double>(t) / T) / f0;
    double b = 1.0 - ab / prev;
    beta[static_cast<size_t>(t - 1)] = std::min(b, 0.999);
    prev = ab;
  }
  return beta;
}

}  // namespace

NoiseSchedule make_schedule(int T, double beta_start, double beta_end,
                            const std::string& kind) {
  if (T < 1) throw ConfigError("schedule needs T >= 1");
  NoiseSchedule s;
  s.T = T;
  s.kind = kind;
  s.beta_start = beta_start;
  s.beta_end = beta_end;

  if (kind == "linear" || kind == "scaled_linear") {
    double lo = beta_start, hi = beta_end;
    if (kind == "scaled_linear") {
      // Ho et al. tuned (1e-4, 0.02) for T = 1000; rescaling the endpoints
      // keeps the total noise injected by a shorter chain comparable, so
      // alpha_bar_T still lands near zero.
      lo *= 1000.0 / T;
      hi *= 1000.0 / T;
    }
    if (!(lo > 0.0)) throw ConfigError("beta_start must be > 0");
    if (!(hi < 1.0))
      throw ConfigError("beta_end must stay below 1 (got effective " +
                        std::to_string(hi) + ")");
    if (hi < lo) throw ConfigError("beta_end < beta_start");
    s.beta = linear_betas(T, lo, hi);
  } else if (kind == "cosine") {
    s.beta = cosine_betas(T);
  } else {
    throw ConfigError("unknown schedule kind '" + kind + "'");
  }

  s.alpha.resize(s.beta.size());
  s.alpha_bar.resize(s.beta.size());
  double prod = 1.0;
  for (size_t i = 0; i < s.beta.size(); ++i) {
    double b = s.beta[i];
    if (!(b > 0.0 && b < 1.0))
      throw ConfigError("beta outside (0,1) at t=" + std::to_string(i + 1));
    if (i > 0 && b < s.beta[i - 1])
      throw ConfigError("beta sequence must be non-decreasing");
    s.alpha[i] = 1.0 - b;
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
    if (i > 0 && !(s.alpha_bar[i] < s.alpha_bar[i - 1]))
      throw ConfigError("alpha_bar must decrease strictly");
  }
  return s;
}

Tensor to_diffusion(const Tensor& unit_range) {
  Tensor out = Tensor::zeros_like(unit_range);
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = 2.0f * unit_range[i] - 1.0f;
  return out;
}

Tensor from_diffusion(const Tensor& internal) {
  Tensor out = Tensor::zeros_like(internal);
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(0.5f * (internal[i] + 1.0f), 0.0f, 1.0f);
  return out;
}

Tensor diffuse_closed_form(const Tensor& x0, int t, const Tensor& eps,
                           const NoiseSchedule& s) {
  s.check_t(t);
  if (!x0.same_shape(eps))
    throw ShapeError("x0 and eps shapes differ: " + x0.shape_str() + " vs " +
                     eps.shape_str());
  const double ab = s.abar(t);
  const float a = static_cast<float>(std::sqrt(ab));
  const float b = static_cast<float>(std::sqrt(1.0 - ab));
  Tensor out = Tensor::zeros_like(x0);
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Tensor diffuse_step(const Tensor& x_prev, int t, const NoiseSchedule& s,
                    Rng& rng) {
  s.check_t(t);
  const double beta = s.beta[static_cast<size_t>(t - 1)];
  const float a = static_cast<float>(std::sqrt(1.0 - beta));
  const float b = static_cast<float>(std::sqrt(beta));
  Tensor out = Tensor::zeros_like(x_prev);
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = a * x_prev[i] + b * static_cast<float>(rng.normal());
  return out;
}

Tensor denoise_step(const Tensor& x_t, int t, const Predictor& eps_hat,
                    const NoiseSchedule& s, Rng& rng, bool force_zero_sigma) {
  s.check_t(t);
  const int n = x_t.rank() > 0 ? x_t.dim(0) : 0;
  Tensor pred = eps_hat(x_t, std::vector<int>(static_cast<size_t>(n), t));
  if (!pred.same_shape(x_t))
    throw ShapeError("predictor output shape " + pred.shape_str() +
                     " does not match x_t " + x_t.shape_str());
  if (!pred.all_finite())
    throw NumericalError("non-finite noise prediction at t=" +
                         std::to_string(t));

  const size_t i = static_cast<size_t>(t - 1);
  const double beta = s.beta[i];
  const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha[i]);
  const double coef = beta / std::sqrt(1.0 - s.alpha_bar[i]);
  // beta_tilde_t = (1 - abar_{t-1}) / (1 - abar_t) * beta_t; zero at t = 1.
  const double beta_tilde =
      (1.0 - s.abar(t - 1)) / (1.0 - s.alpha_bar[i]) * beta;
  const double sigma = (t > 1 && !force_zero_sigma) ? std::sqrt(beta_tilde) : 0.0;

  Tensor out = Tensor::zeros_like(x_t);
  for (int64_t k = 0; k < out.size(); ++k) {
    double mean = inv_sqrt_alpha * (x_t[k] - coef * pred[k]);
    double z = sigma > 0.0 ? sigma * rng.normal() : 0.0;
    out[k] = static_cast<float>(mean + z);
  }
  if (!out.all_finite())
    throw NumericalError("denoise step produced non-finite values at t=" +
                         std::to_string(t));
  return out;
}

}  // namespace uadrs::ddpm
