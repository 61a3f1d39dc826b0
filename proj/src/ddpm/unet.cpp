#include <cmath>

#include "uadrs/core/error.hpp"
#include "uadrs/ddpm/ddpm.hpp"
#include "uadrs/nn/ops.hpp"

namespace uadrs::ddpm {

using nn::Var;

nn::Var Denoiser::ResBlock::operator()(const Var& x, const Var& emb) const {
  Var h = (*conv1)(nn::silu((*gn1)(x)));
  h = nn::add_channel_map(h, (*temb)(emb));
  h = (*conv2)(nn::silu((*gn2)(h)));
  Var res = skip ? (*skip)(x) : x;
  return nn::add(h, res);
}

void Denoiser::ResBlock::collect(const std::string& prefix,
                                 std::vector<nn::NamedParam>& out) const {
  gn1->collect_params(prefix + ".gn1", out);
  conv1->collect_params(prefix + ".conv1", out);
  temb->collect_params(prefix + ".temb", out);
  gn2->collect_params(prefix + ".gn2", out);
  conv2->collect_params(prefix + ".conv2", out);
  if (skip) skip->collect_params(prefix + ".skip", out);
}

Denoiser::ResBlock Denoiser::make_block(int cin, int cout, Rng& rng) {
  ResBlock b;
  b.gn1 = std::make_shared<nn::GroupNormLayer>(cin, std::min(8, cin));
  b.conv1 = std::make_shared<nn::Conv2dLayer>(cin, cout, 3, 1, 1, rng);
  b.temb = std::make_shared<nn::LinearLayer>(time_dim_, cout, rng);
  b.gn2 = std::make_shared<nn::GroupNormLayer>(cout, std::min(8, cout));
  b.conv2 = std::make_shared<nn::Conv2dLayer>(cout, cout, 3, 1, 1, rng);
  if (cin != cout)
    b.skip = std::make_shared<nn::Conv2dLayer>(cin, cout, 1, 1, 0, rng);
  return b;
}

Denoiser::Denoiser(int in_ch, int base_channels, int time_dim, uint64_t seed)
    : in_ch_(in_ch), base_(base_channels), time_dim_(time_dim) {
  if (in_ch < 1 || base_channels < 8 || base_channels % 8 != 0)
    throw ConfigError("denoiser base_channels must be a positive multiple of 8");
  if (time_dim < 2 || time_dim % 2 != 0)
    throw ConfigError("time_dim must be a positive even number");
  Rng rng(splitmix64(seed ^ 0x646e6f69ULL));
  const int B = base_channels;

  temb1_ = std::make_shared<nn::LinearLayer>(time_dim, time_dim, rng);
  temb2_ = std::make_shared<nn::LinearLayer>(time_dim, time_dim, rng);
  stem_ = std::make_shared<nn::Conv2dLayer>(in_ch, B, 3, 1, 1, rng);

  rb_d0_ = make_block(B, B, rng);
  down0_ = std::make_shared<nn::Conv2dLayer>(B, B, 3, 2, 1, rng);
  rb_d1_ = make_block(B, 2 * B, rng);
  down1_ = std::make_shared<nn::Conv2dLayer>(2 * B, 2 * B, 3, 2, 1, rng);
  rb_m1_ = make_block(2 * B, 2 * B, rng);
  rb_m2_ = make_block(2 * B, 2 * B, rng);
  upc1_ = std::make_shared<nn::Conv2dLayer>(2 * B, 2 * B, 3, 1, 1, rng);
  rb_u1_ = make_block(4 * B, 2 * B, rng);
  upc0_ = std::make_shared<nn::Conv2dLayer>(2 * B, B, 3, 1, 1, rng);
  rb_u0_ = make_block(2 * B, B, rng);
  head_gn_ = std::make_shared<nn::GroupNormLayer>(B, std::min(8, B));
  // Zero-initialized head: the untrained model predicts eps = 0, which keeps
  // early reverse steps stable.
  head_ = std::make_shared<nn::Conv2dLayer>(B, in_ch, 3, 1, 1, rng, true);
}

Tensor Denoiser::time_embedding(const std::vector<int>& t, int T) const {
  const int n = static_cast<int>(t.size());
  const int half = time_dim_ / 2;
  Tensor emb({n, time_dim_});
  for (int i = 0; i < n; ++i) {
    if (t[static_cast<size_t>(i)] < 1 || t[static_cast<size_t>(i)] > T)
      throw RangeError("timestep " + std::to_string(t[static_cast<size_t>(i)]) +
                       " outside [1," + std::to_string(T) + "]");
    for (int k = 0; k < half; ++k) {
      double freq = std::exp(-std::log(10000.0) * k / std::max(1, half - 1));
      double arg = static_cast<double>(t[static_cast<size_t>(i)]) * freq;
      emb[static_cast<int64_t>(i) * time_dim_ + k] =
          static_cast<float>(std::sin(arg));
      emb[static_cast<int64_t>(i) * time_dim_ + half + k] =
          static_cast<float>(std::cos(arg));
    }
  }
  return emb;
}

nn::Var Denoiser::forward(const Var& x, const std::vector<int>& t, int T) const {
  const Tensor& v = x->value;
  if (v.rank() != 4 || v.dim(1) != in_ch_)
    throw ShapeError("denoiser expects [N," + std::to_string(in_ch_) +
                     ",H,W], got " + v.shape_str());
  if (static_cast<int>(t.size()) != v.dim(0))
    throw ShapeError("one timestep per sample required");
  if (v.dim(2) % 4 != 0 || v.dim(3) % 4 != 0)
    throw ShapeError("spatial size must be divisible by 4 for the U-Net");

  Var emb = nn::silu((*temb1_)(nn::make_const(time_embedding(t, T))));
  emb = nn::silu((*temb2_)(emb));

  Var h = (*stem_)(x);
  Var s0 = rb_d0_(h, emb);
  Var d1 = rb_d1_((*down0_)(s0), emb);
  Var m = (*down1_)(d1);
  m = rb_m1_(m, emb);
  m = rb_m2_(m, emb);
  Var u1 = (*upc1_)(nn::upsample_nearest2(m));
  u1 = rb_u1_(nn::concat_channels(u1, d1), emb);
  Var u0 = (*upc0_)(nn::upsample_nearest2(u1));
  u0 = rb_u0_(nn::concat_channels(u0, s0), emb);
  return (*head_)(nn::silu((*head_gn_)(u0)));
}

Tensor Denoiser::predict(const Tensor& x, const std::vector<int>& t,
                         int T) const {
  nn::NoGradGuard guard;
  return forward(nn::make_const(x), t, T)->value;
}

Predictor Denoiser::predictor(int T) const {
  return [this, T](const Tensor& x, const std::vector<int>& t) {
    return predict(x, t, T);
  };
}

std::vector<nn::NamedParam> Denoiser::parameters() const {
  std::vector<nn::NamedParam> out;
  temb1_->collect_params("temb1", out);
  temb2_->collect_params("temb2", out);
  stem_->collect_params("stem", out);
  rb_d0_.collect("rb_d0", out);
  down0_->collect_params("down0", out);
  rb_d1_.collect("rb_d1", out);
  down1_->collect_params("down1", out);
  rb_m1_.collect("rb_m1", out);
  rb_m2_.collect("rb_m2", out);
  upc1_->collect_params("upc1", out);
  rb_u1_.collect("rb_u1", out);
  upc0_->collect_params("upc0", out);
  rb_u0_.collect("rb_u0", out);
  head_gn_->collect_params("head_gn", out);
  head_->collect_params("head", out);
  return out;
}

}  // namespace uadrs::ddpm
