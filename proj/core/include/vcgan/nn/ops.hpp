#pragma once

#include <span>
#include <vector>

#include "vcgan/nn/autograd.hpp"

namespace vcgan::nn {

struct ConvGeometry {
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
};

// x [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [1,Cout,1,1] (may be undefined).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, ConvGeometry g);

// x [N,Cin,H,W], weight [Cin,Cout,kh,kw]; output H' = (H-1)*stride - 2*pad + kh.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, ConvGeometry g);

// [N, C*rh*rw, H, W] -> [N, C, H*rh, W*rw]
template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int rh, int rw);

// Per-sample, per-channel normalization over H*W with affine [1,C,1,1] gamma/beta.
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T>
Var<T> sigmoid(const Var<T>& x);
template <typename T>
Var<T> tanh(const Var<T>& x);

// Gated linear unit over channels: first half * sigmoid(second half).
template <typename T>
Var<T> glu(const Var<T>& x);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T s);
template <typename T>
Var<T> mean_of(const std::vector<Var<T>>& scalars);

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> concat_batch(const std::vector<Var<T>>& parts);
template <typename T>
Var<T> select_sample(const Var<T>& x, int n);

// [N,C,H,1] -> [N,C,H,width]
template <typename T>
Var<T> tile_time(const Var<T>& x, int width);
// [N,C,H,W] -> [N,C,H,1]
template <typename T>
Var<T> mean_time(const Var<T>& x);
// out[..., t] = x[..., index[t]]; backward scatter-adds.
template <typename T>
Var<T> gather_time(const Var<T>& x, std::span<const int> index);

// x flattened per sample to D, weight [K,D,1,1], bias [1,K,1,1] -> [N,K,1,1]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

// Mean over the batch of -max(log softmax(logits)[label], log(floor)).
template <typename T>
Var<T> nll_from_logits(const Var<T>& logits, std::span<const int> labels, T prob_floor);

// Mean absolute difference over every element.
template <typename T>
Var<T> l1_mean(const Var<T>& a, const Var<T>& b);

// Row-wise softmax of [N,K,1,1] logits (no gradient).
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

}  // namespace vcgan::nn
