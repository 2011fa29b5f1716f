#include "idip/network.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "idip/ops.hpp"
#include "idip/rng.hpp"

namespace idip {

namespace {

constexpr std::uint64_t kNoiseStream = 1;

std::string level_name(const char* prefix, std::size_t level, const char* conv) {
  return std::string(prefix) + std::to_string(level) + "." + conv;
}

std::size_t decoder_channels(const NetworkConfig& config, std::size_t level) {
  return level >= 2 ? config.channels[level - 2] : config.channels[0];
}

}  // namespace

void NetworkConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("network depth must be >= 1");
  if (channels.size() != depth) {
    throw std::invalid_argument("network channel list has " + std::to_string(channels.size()) +
                                " entries, depth is " + std::to_string(depth));
  }
  for (auto c : channels) {
    if (c == 0) throw std::invalid_argument("network channel counts must be positive");
  }
  if (noise_channels == 0 || output_channels == 0) {
    throw std::invalid_argument("noise and output channel counts must be positive");
  }
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) {
    throw std::invalid_argument("leaky slope must lie in [0, 1)");
  }
}

std::vector<ConvLayer> layer_layout(const NetworkConfig& config) {
  config.validate();
  std::vector<ConvLayer> layers;
  std::size_t in = config.noise_channels;
  for (std::size_t level = 1; level <= config.depth; ++level) {
    const auto c = config.channels[level - 1];
    layers.push_back({level_name("enc", level, "down"), in, c, 3, 2});
    layers.push_back({level_name("enc", level, "conv"), c, c, 3, 1});
    in = c;
  }
  for (std::size_t level = config.depth; level >= 1; --level) {
    const auto skip = level >= 2 ? config.channels[level - 2] : config.noise_channels;
    const auto c = decoder_channels(config, level);
    layers.push_back({level_name("dec", level, "conv1"), in + skip, c, 3, 1});
    layers.push_back({level_name("dec", level, "conv2"), c, c, 3, 1});
    in = c;
  }
  layers.push_back({"out", in, config.output_channels, 1, 1});
  return layers;
}

template <typename T>
void ModelParameters<T>::add(std::string name, Tensor<T> value) {
  const auto n = value.size();
  entries_.push_back({std::move(name), std::move(value), std::vector<T>(n, T(0)),
                      std::vector<T>(n, T(0))});
}

template <typename T>
const Tensor<T>& ModelParameters<T>::at(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

template <typename T>
std::size_t ModelParameters<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template <typename T>
void ModelParameters<T>::zero_grad() {
  for (auto& e : entries_) e.value.zero_grad();
}

template <typename T>
std::uint64_t ModelParameters<T>::checksum() const {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  auto mix = [&hash](const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      hash ^= p[i];
      hash *= 0x100000001b3ull;
    }
  };
  for (const auto& e : entries_) {
    mix(e.value.data().data(), e.value.size() * sizeof(T));
    mix(e.first_moment.data(), e.first_moment.size() * sizeof(T));
    mix(e.second_moment.data(), e.second_moment.size() * sizeof(T));
  }
  mix(&step, sizeof(step));
  return hash;
}

template <typename T>
ModelParameters<T> ModelParameters<T>::clone() const {
  ModelParameters out;
  for (const auto& e : entries_) {
    auto copy = e.value.clone();
    copy.set_requires_grad(true);
    out.entries_.push_back({e.name, std::move(copy), e.first_moment, e.second_moment});
  }
  out.step = step;
  return out;
}

template <typename T>
void ModelParameters<T>::assign_from(const ModelParameters& other) {
  if (other.entries_.size() != entries_.size()) {
    throw ShapeError("parameter sets differ in layout");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i];
    const auto& src = other.entries_[i];
    if (dst.value.shape() != src.value.shape()) {
      throw ShapeError("parameter " + dst.name + " shape " + to_string(dst.value.shape()) +
                       " vs " + to_string(src.value.shape()));
    }
    auto values = dst.value.mutable_data();
    std::copy(src.value.data().begin(), src.value.data().end(), values.begin());
    dst.first_moment = src.first_moment;
    dst.second_moment = src.second_moment;
  }
  step = other.step;
}

template <typename T>
DipNetwork<T>::DipNetwork(NetworkConfig config)
    : config_(std::move(config)), layers_(layer_layout(config_)) {}

template <typename T>
Tensor<T> DipNetwork<T>::forward(const Tensor<T>& noise, const ModelParameters<T>& params) const {
  const auto& shape = noise.shape();
  if (shape.size() != 4 || shape[0] != 1 || shape[1] != config_.noise_channels) {
    throw ShapeError("network input must be [1," + std::to_string(config_.noise_channels) +
                     ",H,W], got " + to_string(shape));
  }
  const auto multiple = config_.size_multiple();
  if (shape[2] % multiple != 0 || shape[3] % multiple != 0) {
    throw ShapeError("input size " + std::to_string(shape[2]) + "x" + std::to_string(shape[3]) +
                     " is not divisible by " + std::to_string(multiple));
  }
  const T slope = static_cast<T>(config_.leaky_slope);
  auto conv = [&](const Tensor<T>& x, const std::string& name, std::size_t stride) {
    const auto& weight = params.at(name + ".weight");
    const auto& bias = params.at(name + ".bias");
    Conv2dOptions options{stride, Padding::Reflection, weight.dim(2) / 2};
    return leaky_relu(conv2d(x, weight, bias, options), slope);
  };

  std::vector<Tensor<T>> levels{noise};
  for (std::size_t level = 1; level <= config_.depth; ++level) {
    auto h = conv(levels.back(), level_name("enc", level, "down"), 2);
    levels.push_back(conv(h, level_name("enc", level, "conv"), 1));
  }
  Tensor<T> y = levels.back();
  for (std::size_t level = config_.depth; level >= 1; --level) {
    y = concat_channels(upsample_nearest(y, 2), levels[level - 1]);
    y = conv(y, level_name("dec", level, "conv1"), 1);
    y = conv(y, level_name("dec", level, "conv2"), 1);
  }
  const auto& weight = params.at("out.weight");
  const auto& bias = params.at("out.bias");
  return sigmoid(conv2d(y, weight, bias, Conv2dOptions{1, Padding::Zero, 0}));
}

template <typename T>
std::pair<DipNetwork<T>, ModelParameters<T>> build_network(const NetworkConfig& config,
                                                           std::uint64_t seed) {
  DipNetwork<T> network(config);
  ModelParameters<T> params;
  std::mt19937_64 rng(seed);
  for (const auto& layer : network.layers()) {
    const auto fan_in = layer.in_channels * layer.kernel * layer.kernel;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<T> weights(layer.out_channels * fan_in);
    for (auto& w : weights) w = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
    params.add(layer.name + ".weight",
               Tensor<T>(Shape{layer.out_channels, layer.in_channels, layer.kernel, layer.kernel},
                         std::move(weights), true));
    params.add(layer.name + ".bias", Tensor<T>::zeros(Shape{layer.out_channels}, true));
  }
  return {std::move(network), std::move(params)};
}

template <typename T>
Tensor<T> make_noise(std::size_t channels, std::size_t height, std::size_t width,
                     std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, kNoiseStream));
  std::vector<T> values(channels * height * width);
  for (auto& v : values) v = static_cast<T>(0.1 * uniform01(rng));
  return Tensor<T>(Shape{1, channels, height, width}, std::move(values));
}

template class ModelParameters<float>;
template class ModelParameters<double>;
template class DipNetwork<float>;
template class DipNetwork<double>;
template std::pair<DipNetwork<float>, ModelParameters<float>> build_network(const NetworkConfig&,
                                                                            std::uint64_t);
template std::pair<DipNetwork<double>, ModelParameters<double>> build_network(
    const NetworkConfig&, std::uint64_t);
template Tensor<float> make_noise(std::size_t, std::size_t, std::size_t, std::uint64_t);
template Tensor<double> make_noise(std::size_t, std::size_t, std::size_t, std::uint64_t);

}  // namespace idip
