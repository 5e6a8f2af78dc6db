#pragma once

#include <cstddef>
#include <vector>

#include "gfnet/numcore/tensor.hpp"

namespace gfnet {

// Elementwise (shapes must match exactly; no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real s);
Tensor add_scalar(const Tensor& a, real s);
Tensor one_minus(const Tensor& a);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
/// Gradient passes only where lo < a < hi.
Tensor clamp(const Tensor& a, real lo, real hi);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [N, K] -> [N]
Tensor sum_rows(const Tensor& a);

// Shape.
Tensor reshape(const Tensor& a, const Shape& shape);
/// Concatenate [N, D_i] matrices along the feature axis.
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Column j of an [N, K] matrix as an [N] vector.
Tensor column(const Tensor& a, std::size_t j);
/// Repeats a one-element tensor into `shape`.
Tensor broadcast(const Tensor& a, const Shape& shape);

// Dense layers.
/// [N, K] x [K, M] -> [N, M]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[N, D] * weight[O, D]^T + bias[O]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Zero-padded cross-correlation. input [N, C, H, W], kernel [F, C, kh, kw], bias [F] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding);
/// [N, C, H, W] -> [N, C]
Tensor global_avg_pool(const Tensor& input);

/// Row-wise softmax of [N, C] logits.
Tensor softmax(const Tensor& logits);

struct CrossEntropyResult {
  Tensor loss;   // scalar mean over the batch
  Tensor probs;  // [N, C], detached
};

/// Numerically stable softmax cross-entropy; labels must lie in [0, C).
CrossEntropyResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace gfnet
