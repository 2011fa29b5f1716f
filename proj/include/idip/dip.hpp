#pragma once

#include <cstdint>
#include <functional>
#include <stop_token>
#include <type_traits>
#include <vector>

#include "idip/image.hpp"
#include "idip/network.hpp"
#include "idip/tensor.hpp"

namespace idip {

struct AdamSettings {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamSettings&, const AdamSettings&) = default;
};

struct LossValue {
  double value = 0.0;
  int iteration = 0;

  friend bool operator==(const LossValue&, const LossValue&) = default;
};

template <typename T>
Tensor<T> image_to_tensor(const Image& image);
template <typename T>
Image tensor_to_image(const Tensor<T>& tensor);

/// [1, channels, H, W] tensor with 1 at known pixels, 0 at damaged ones.
template <typename T>
Tensor<T> known_weight(const DamageMask& mask, std::size_t channels = Image::kChannels);

template <typename T>
struct MaskedLoss {
  Tensor<T> loss;
  bool vacuous = false;  // no known pixels: loss is identically 0
};

/// Mean squared residual over known pixels only.
template <typename T>
MaskedLoss<T> masked_loss(const Tensor<T>& output, const Tensor<T>& target, const DamageMask& mask);

/// Bias-corrected Adam update; clears gradients and increments the step.
/// Throws TapeError if any parameter lacks a gradient.
template <typename T>
void adam_step(ModelParameters<T>& params, const AdamSettings& settings);

template <typename T>
struct IterationEvent {
  int iteration;  // 1-based within this call
  double loss;
  const Tensor<T>& output;  // network output that produced `loss`
};

template <typename T>
using IterationObserver = std::function<void(const IterationEvent<T>&)>;

template <typename T>
struct OptimizationProblem {
  const DipNetwork<T>& network;
  ModelParameters<T>& parameters;
  const Tensor<T>& noise;
  const Tensor<T>& target;
  const DamageMask& mask;
};

struct OptimizeOptions {
  int iterations = 600;
  AdamSettings adam{};
  /// Std-dev of Gaussian jitter added to z each iteration; 0 disables it.
  double noise_perturbation = 0.0;
  std::uint64_t perturbation_seed = 0;
  std::stop_token stop{};
};

template <typename T>
struct OptimizeResult {
  Tensor<T> output;  // f(z) with the final parameters
  std::vector<LossValue> trace;
  bool cancelled = false;
};

/// Runs forward -> masked loss -> backward -> Adam for up to
/// options.iterations steps. The stop token is checked before every
/// iteration. On a non-finite loss the parameters are restored to the last
/// state that produced a finite loss and OptimizationAborted is thrown.
template <typename T>
OptimizeResult<T> optimize(const OptimizationProblem<T>& problem, const OptimizeOptions& options,
                           const std::type_identity_t<IterationObserver<T>>& observer = {});

}  // namespace idip
