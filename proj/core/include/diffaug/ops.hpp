#pragma once

#include <cstdint>
#include <vector>

#include "diffaug/tensor.hpp"

namespace diffaug::ops {

// Elementwise (same shape).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// y = c * x
Tensor scale(const Tensor& x, double c);
// y = x + c
Tensor add_const(const Tensor& x, double c);
Tensor exp(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// 2-D linear algebra. A: (m,k), B: (k,n).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// y = x + bias, x: (n,d), bias: (d), broadcast over rows.
Tensor add_bias_rows(const Tensor& x, const Tensor& bias);
// Row slice [r0, r0+rows) of a 2-D tensor.
Tensor narrow_rows(const Tensor& x, size_t r0, size_t rows);
// Column slice [c0, c0+cols) of a 2-D tensor.
Tensor narrow_cols(const Tensor& x, size_t c0, size_t cols);
// Stack 2-D tensors with equal column counts along rows.
Tensor concat_rows(const std::vector<Tensor>& parts);
// Stack 2-D tensors with equal row counts along columns.
Tensor concat_cols(const std::vector<Tensor>& parts);

// Shape ops.
Tensor reshape(const Tensor& x, Shape shape);

// Reductions.
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x);
// Mean squared error, mean over all elements.
Tensor mse(const Tensor& a, const Tensor& b);

// Row-wise softmax of a 2-D tensor. Rows sum to 1.
Tensor softmax(const Tensor& x);
// softmax(q k^T / sqrt(d)) v; q: (n,d), k: (m,d), v: (m,dv).
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Mean cross entropy of row logits (n,k) against integer labels.
Tensor cross_entropy_logits(const Tensor& logits,
                            const std::vector<size_t>& labels);
// Mean binary cross entropy of logits (n) against targets in [0,1].
Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets);

// Embedding lookup: table (v,d), ids -> (n,d). Backward scatter-adds.
Tensor embedding(const Tensor& table, const std::vector<size_t>& ids);

// NCHW convolution; w: (oc,ic,kh,kw), optional bias (oc).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              size_t stride, size_t pad);
// Nearest-neighbour 2x upsampling of NCHW.
Tensor upsample_nearest2(const Tensor& x);
// Concatenate two NCHW tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// y[b,c,:,:] = x[b,c,:,:] + tb[b,c]; tb: (batch, channels).
Tensor add_channel_bias(const Tensor& x, const Tensor& tb);
// (b,c,h,w) -> (b*h*w, c) token matrix and back.
Tensor nchw_to_tokens(const Tensor& x);
Tensor tokens_to_nchw(const Tensor& x, size_t b, size_t c, size_t h, size_t w);

// Group normalization over NCHW (batch, channels, h, w) with `groups`
// channel groups; gamma/beta have shape (channels).
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  size_t groups, double eps = 1e-5);
// Layer norm of a (n,d) matrix == group_norm on (n,d,1,1) with one group.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// Raw matrix multiply into preallocated C (no tape). Exposed for reuse in
// oracles and benchmarks. C = op(A) * op(B); A is (m,k) after transA.
void mat_mul_raw(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n, bool trans_a, bool trans_b,
                 bool accumulate);

}  // namespace diffaug::ops
