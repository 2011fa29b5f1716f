#pragma once

// Central finite-difference oracle used by the gradient tests. It only calls
// forward code paths and never inspects tape internals.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "idip/tensor.hpp"

namespace idip::testing {

template <typename T>
std::vector<T> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> out(n);
  for (auto& v : out) v = static_cast<T>(dist(rng));
  return out;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = true, double lo = -1.0,
                        double hi = 1.0) {
  auto n = numel(shape);
  return Tensor<T>(std::move(shape), random_values<T>(n, seed, lo, hi), requires_grad);
}

/// d loss / d x by central differences, perturbing x in place.
inline std::vector<double> finite_difference(Tensor<double>& x, const std::function<double()>& loss,
                                             double h = 1e-4) {
  auto values = x.mutable_data();
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = loss();
    values[i] = saved - h;
    const double down = loss();
    values[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// |a - b| / max(|a|, |b|, floor): relative where gradients are non-negligible.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

template <typename A, typename B>
double max_relative_error(std::span<const A> analytic, const std::vector<B>& numeric,
                          double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    worst = std::max(worst, relative_error(static_cast<double>(analytic[i]),
                                           static_cast<double>(numeric[i]), floor));
  }
  return worst;
}

}  // namespace idip::testing
