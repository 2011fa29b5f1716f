#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "idip/tensor.hpp"

namespace idip {

/// Encoder-decoder hourglass with channel-concatenation skips.
///
/// Encoder level i: conv3x3/2 -> leaky -> conv3x3 -> leaky, channels[i-1]
/// outputs. Decoder level i (deepest first): upsample x2, concatenate the
/// encoder input of level i, then conv3x3 -> leaky -> conv3x3 -> leaky with
/// channels[i-2] outputs (channels[0] at the top level). A final 1x1 conv and
/// sigmoid map to output_channels in (0, 1). All 3x3 convs use reflection
/// padding.
struct NetworkConfig {
  std::size_t depth = 3;
  std::vector<std::size_t> channels{16, 32, 64};
  std::size_t noise_channels = 32;
  std::size_t output_channels = 3;
  double leaky_slope = 0.1;

  void validate() const;
  /// Spatial sizes must be multiples of this.
  std::size_t size_multiple() const { return std::size_t{1} << depth; }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct ConvLayer {
  std::string name;
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;

  std::size_t parameter_count() const { return out_channels * (in_channels * kernel * kernel + 1); }
};

/// Every convolution of the network in initialization order.
std::vector<ConvLayer> layer_layout(const NetworkConfig& config);

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> first_moment;
  std::vector<T> second_moment;
};

/// Trainable tensors plus Adam state.
template <typename T>
class ModelParameters {
 public:
  std::vector<NamedParameter<T>>& entries() { return entries_; }
  const std::vector<NamedParameter<T>>& entries() const { return entries_; }

  void add(std::string name, Tensor<T> value);
  const Tensor<T>& at(std::string_view name) const;

  std::size_t scalar_count() const;
  void zero_grad();
  /// FNV-1a over parameter and moment bytes, plus the step count.
  std::uint64_t checksum() const;

  /// Deep copy with detached tensors; gradients are not copied.
  ModelParameters clone() const;
  /// Copies values and optimizer state from `other` (same layout) in place.
  void assign_from(const ModelParameters& other);

  template <typename U>
  ModelParameters<U> cast() const {
    ModelParameters<U> out;
    for (const auto& e : entries_) {
      std::vector<U> values(e.value.data().begin(), e.value.data().end());
      out.add(e.name, Tensor<U>(e.value.shape(), std::move(values), true));
      auto& added = out.entries().back();
      added.first_moment.assign(e.first_moment.begin(), e.first_moment.end());
      added.second_moment.assign(e.second_moment.begin(), e.second_moment.end());
    }
    out.step = step;
    return out;
  }

  std::int64_t step = 0;

 private:
  std::vector<NamedParameter<T>> entries_;
};

template <typename T>
class DipNetwork {
 public:
  explicit DipNetwork(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }

  /// z [1, noise_channels, H, W] -> [1, output_channels, H, W].
  Tensor<T> forward(const Tensor<T>& noise, const ModelParameters<T>& params) const;

 private:
  NetworkConfig config_;
  std::vector<ConvLayer> layers_;
};

/// Uniform He fan-in initialization of weights, zero biases.
template <typename T>
std::pair<DipNetwork<T>, ModelParameters<T>> build_network(const NetworkConfig& config,
                                                           std::uint64_t seed);

/// Fixed network input drawn from U[0, 0.1].
template <typename T>
Tensor<T> make_noise(std::size_t channels, std::size_t height, std::size_t width,
                     std::uint64_t seed);

extern template class ModelParameters<float>;
extern template class ModelParameters<double>;
extern template class DipNetwork<float>;
extern template class DipNetwork<double>;

}  // namespace idip
