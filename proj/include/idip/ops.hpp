#pragma once

#include <cstddef>

#include "idip/tensor.hpp"

namespace idip {

enum class Padding { Zero, Reflection };

struct Conv2dOptions {
  std::size_t stride = 1;
  Padding padding = Padding::Reflection;
  std::size_t pad = 0;
};

/// input [N,Cin,H,W], kernel [Cout,Cin,kh,kw] (odd kh, kw), bias [Cout].
/// Output spatial size is (H + 2*pad - kh) / stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 const Conv2dOptions& options);

// Elementwise binary ops accept equal shapes, or a right operand whose
// leading (batch) dimension is 1 and is broadcast over the left's batch.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);

/// [N,C,H,W] -> [N,C,H*factor,W*factor], nearest neighbour.
template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& a, std::size_t factor);

/// Concatenates two [N,*,H,W] tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// sum(weight * (pred - target)^2) / max(1, count(weight != 0)), as a scalar.
/// Differentiable in pred and target; weight is treated as a constant.
template <typename T>
Tensor<T> mse_reduce(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& weight);

/// Index into [0, n) under whole-sample mirror reflection (no edge repeat).
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

}  // namespace idip
