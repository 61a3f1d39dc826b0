#pragma once

#include <vector>

#include "uadrs/nn/autodiff.hpp"

namespace uadrs::nn {

// Elementwise and scalar ops.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var add_scalar(const Var& a, float c);

// Linear algebra.
Var matmul(const Var& a, const Var& b);              // [m,k] x [k,n]
Var linear(const Var& x, const Var& w, const Var& b);  // x [n,in], w [out,in]

// Activations.
Var relu(const Var& x);
Var silu(const Var& x);

/// Same data, new shape (element count must match).
Var reshape(const Var& x, const std::vector<int>& shape);

// Convolution and spatial ops on [N,C,H,W].
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var avg_pool2d(const Var& x);          // 2x2, stride 2
Var global_avg_pool(const Var& x);     // -> [N,C]
Var upsample_nearest2(const Var& x);   // -> [N,C,2H,2W]
Var concat_channels(const Var& a, const Var& b);
/// Reorders samples along dim 0: out[i] = x[perm[i]].
Var permute_samples(const Var& x, const std::vector<int>& perm);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups,
               float eps = 1e-5f);
/// Adds a per-sample per-channel vector [N,C] across all spatial positions.
Var add_channel_map(const Var& x, const Var& v);

// Reductions and losses. Scalar outputs accumulate in double precision.
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var mse_loss(const Var& pred, const Var& target);

/// Mean cross-entropy from logits. Classification: logits [N,C], labels
/// length N. Segmentation: logits [N,C,H,W], labels length N*H*W (row-major).
Var softmax_cross_entropy(const Var& logits, const std::vector<int32_t>& labels);

/// Row-wise softmax probabilities over the class dim (no tape; plain value).
Tensor softmax_probs(const Tensor& logits);

/// Mean KL(ref || softmax(logits)) over units; ref_probs holds fixed
/// probabilities shaped like the logits. Gradients flow into logits only.
Var kl_to_reference(const Tensor& ref_probs, const Var& logits);

/// Sum over samples of the per-sample L-inf distance to a fixed origin;
/// subgradient at the first attaining element of each sample.
Var linf_dist_sum(const Var& x, const Tensor& origin);

/// argmax over the class dim; returns one entry per unit (sample or pixel).
std::vector<int32_t> argmax_classes(const Tensor& logits);

}  // namespace uadrs::nn
