#include "idip/dip.hpp"

#include <cmath>
#include <random>
#include <string>

#include "idip/ops.hpp"
#include "idip/rng.hpp"

namespace idip {

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  std::vector<T> values(image.pixels.begin(), image.pixels.end());
  return Tensor<T>(Shape{1, Image::kChannels, image.height, image.width}, std::move(values));
}

template <typename T>
Image tensor_to_image(const Tensor<T>& tensor) {
  const auto& s = tensor.shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != Image::kChannels) {
    throw ShapeError("expected an image tensor [1,3,H,W], got " + to_string(s));
  }
  Image out(s[3], s[2]);
  const auto data = tensor.data();
  for (std::size_t i = 0; i < data.size(); ++i) out.pixels[i] = static_cast<float>(data[i]);
  return out;
}

template <typename T>
Tensor<T> known_weight(const DamageMask& mask, std::size_t channels) {
  const auto plane = mask.size();
  std::vector<T> values(channels * plane);
  const auto& known = mask.values();
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) values[c * plane + i] = known[i] ? T(1) : T(0);
  return Tensor<T>(Shape{1, channels, mask.height(), mask.width()}, std::move(values));
}

template <typename T>
MaskedLoss<T> masked_loss(const Tensor<T>& output, const Tensor<T>& target, const DamageMask& mask) {
  const auto& s = output.shape();
  if (s.size() != 4 || s[2] != mask.height() || s[3] != mask.width()) {
    throw ShapeError("masked_loss: output " + to_string(s) + " does not match a " +
                     std::to_string(mask.width()) + "x" + std::to_string(mask.height()) + " mask");
  }
  return MaskedLoss<T>{mse_reduce(output, target, known_weight<T>(mask, s[1])),
                       mask.known_count() == 0};
}

template <typename T>
void adam_step(ModelParameters<T>& params, const AdamSettings& settings) {
  for (const auto& e : params.entries()) {
    if (!e.value.has_grad()) throw TapeError("adam_step: parameter " + e.name + " has no gradient");
  }
  params.step += 1;
  const auto t = static_cast<double>(params.step);
  const double c1 = 1.0 - std::pow(settings.beta1, t);
  const double c2 = 1.0 - std::pow(settings.beta2, t);
  const T b1 = static_cast<T>(settings.beta1);
  const T b2 = static_cast<T>(settings.beta2);
  const T step_size = static_cast<T>(settings.lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(settings.eps);
  for (auto& e : params.entries()) {
    auto theta = e.value.mutable_data();
    auto g = e.value.grad();
    auto& m = e.first_moment;
    auto& v = e.second_moment;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      theta[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
    }
    e.value.zero_grad();
  }
}

template <typename T>
OptimizeResult<T> optimize(const OptimizationProblem<T>& problem, const OptimizeOptions& options,
                           const std::type_identity_t<IterationObserver<T>>& observer) {
  if (options.iterations < 1) throw std::invalid_argument("optimize: iterations must be >= 1");
  auto& params = problem.parameters;
  const auto weight = known_weight<T>(problem.mask, problem.target.dim(1));
  OptimizeResult<T> result;
  result.trace.reserve(static_cast<std::size_t>(options.iterations));
  ModelParameters<T> checkpoint = params.clone();

  for (int iteration = 1; iteration <= options.iterations; ++iteration) {
    if (options.stop.stop_requested()) {
      result.cancelled = true;
      break;
    }
    Tensor<T> input = problem.noise;
    if (options.noise_perturbation > 0.0) {
      std::mt19937_64 rng(mix_seed(options.perturbation_seed, static_cast<std::uint64_t>(params.step)));
      std::normal_distribution<double> jitter(0.0, options.noise_perturbation);
      std::vector<T> values(problem.noise.data().begin(), problem.noise.data().end());
      for (auto& v : values) v += static_cast<T>(jitter(rng));
      input = Tensor<T>(problem.noise.shape(), std::move(values));
    }

    GradientTape<T> tape;
    Tensor<T> output;
    Tensor<T> loss;
    {
      auto recording = tape.record();
      output = problem.network.forward(input, params);
      loss = mse_reduce(output, problem.target, weight);
    }
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
      params.assign_from(checkpoint);
      params.zero_grad();
      throw OptimizationAborted("non-finite loss at iteration " + std::to_string(iteration) +
                                    "; parameters restored to the last finite state",
                                iteration);
    }
    checkpoint.assign_from(params);
    tape.backward(loss);
    adam_step(params, options.adam);
    result.trace.push_back({value, iteration});
    if (observer) observer(IterationEvent<T>{iteration, value, output});
  }

  result.output = problem.network.forward(problem.noise, params);
  return result;
}

#define IDIP_INSTANTIATE_DIP(T)                                                                \
  template Tensor<T> image_to_tensor<T>(const Image&);                                        \
  template Image tensor_to_image(const Tensor<T>&);                                           \
  template Tensor<T> known_weight<T>(const DamageMask&, std::size_t);                         \
  template MaskedLoss<T> masked_loss(const Tensor<T>&, const Tensor<T>&, const DamageMask&);  \
  template void adam_step(ModelParameters<T>&, const AdamSettings&);                          \
  template OptimizeResult<T> optimize(const OptimizationProblem<T>&, const OptimizeOptions&,  \
                                      const std::type_identity_t<IterationObserver<T>>&);

IDIP_INSTANTIATE_DIP(float)
IDIP_INSTANTIATE_DIP(double)

#undef IDIP_INSTANTIATE_DIP

}  // namespace idip
