#pragma once

#include <vector>

#include "spikekit/tensor.hpp"

namespace spikekit {

// Elementwise (matching shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Scalar broadcast.
Tensor scalar_mul(const Tensor& a, scalar_t s);
Tensor scalar_add(const Tensor& a, scalar_t s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, scalar_t s) { return scalar_mul(a, s); }
inline Tensor operator*(scalar_t s, const Tensor& a) { return scalar_mul(a, s); }

/** Same elements, new extents (row-major order preserved). */
Tensor reshape(const Tensor& x, Shape shape);

/** [M,K] x [K,N] -> [M,N]. */
Tensor matmul(const Tensor& a, const Tensor& b);

/** Adds a length-K vector along the last axis of x. */
Tensor bias_add(const Tensor& x, const Tensor& b);

/** 2-D convolution, stride 1, zero padding `pad`.
 *  x: [B,Cin,H,W], w: [Cout,Cin,kh,kw], bias: [Cout] or undefined. */
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int pad);

/** 2x2 average pooling, stride 2; extents must be even. x: [B,C,H,W]. */
Tensor avg_pool2(const Tensor& x);

/** [B,C,H,W] -> [B,C] spatial mean. */
Tensor global_avg_pool(const Tensor& x);

/** Mean over one axis; result drops that axis. */
Tensor mean_axis(const Tensor& x, size_t axis);

/** Mean over all elements -> scalar. */
Tensor mean(const Tensor& x);

Tensor square(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);

/** Max over one axis; gradient routes to the first maximal element. */
Tensor max_axis(const Tensor& x, size_t axis);

/** Temperature-softened softmax over the last axis, computed with a
 *  max shift so any finite logits give finite probabilities. */
Tensor softmax(const Tensor& logits, scalar_t temperature);

/** Mean cross-entropy of logits [B,K] against integer labels. */
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace spikekit
