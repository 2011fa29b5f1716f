#include "idip/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "idip/metrics.hpp"
#include "idip/rng.hpp"

namespace idip {

namespace {

Image gradient_truth(std::size_t n, std::mt19937_64& rng) {
  const bool flip_x = uniform01(rng) < 0.5;
  const bool flip_y = uniform01(rng) < 0.5;
  Image img(n, n);
  const double span = static_cast<double>(n - 1);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double u = (flip_x ? span - x : x) / span;
      const double v = (flip_y ? span - y : y) / span;
      img.at(0, y, x) = static_cast<float>(0.1 + 0.8 * u);
      img.at(1, y, x) = static_cast<float>(0.1 + 0.8 * v);
      img.at(2, y, x) = static_cast<float>(0.5 + 0.35 * (u - v));
    }
  }
  return img;
}

Image texture_truth(std::size_t n, std::mt19937_64& rng) {
  constexpr double tau = 2.0 * std::numbers::pi;
  double phase[3][2];
  for (auto& c : phase) {
    c[0] = tau * uniform01(rng);
    c[1] = tau * uniform01(rng);
  }
  Image img(n, n);
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double v = 0.5 + 0.22 * std::sin(tau * x / 8.0 + phase[c][0]) +
                         0.18 * std::sin(tau * (x + y) / 12.0 + phase[c][1]);
        img.at(c, y, x) = static_cast<float>(v);
      }
    }
  }
  return img;
}

Image checker_truth(std::size_t n, std::mt19937_64& rng) {
  const std::size_t tile = std::max<std::size_t>(2, n / 8);
  float a[3], b[3];
  for (std::size_t c = 0; c < 3; ++c) {
    a[c] = static_cast<float>(0.65 + 0.3 * uniform01(rng));
    b[c] = static_cast<float>(0.05 + 0.3 * uniform01(rng));
  }
  Image img(n, n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const bool dark = ((x / tile) + (y / tile)) % 2 == 1;
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = dark ? b[c] : a[c];
    }
  }
  return img;
}

DamageMask blotch_mask(std::size_t n, double fraction, std::mt19937_64& rng) {
  const auto total = n * n;
  auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  target = std::clamp<std::size_t>(target, 1, total - 1);
  const std::size_t min_side = std::max<std::size_t>(2, n / 16);
  const std::size_t max_side = std::max<std::size_t>(min_side + 1, n / 4);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1));
  };
  DamageMask mask(n, n, true);
  std::size_t damaged = 0;
  while (damaged < target) {
    const auto w = std::min(n, pick(min_side, max_side));
    const auto h = std::min(n, pick(min_side, max_side));
    const auto x0 = pick(0, n - w);
    const auto y0 = pick(0, n - h);
    for (std::size_t y = y0; y < std::min(n, y0 + h) && damaged < target; ++y) {
      for (std::size_t x = x0; x < std::min(n, x0 + w) && damaged < target; ++x) {
        if (mask.known(x, y)) {
          mask.set_known(x, y, false);
          ++damaged;
        }
      }
    }
  }
  return mask;
}

}  // namespace

FixtureKind parse_fixture_kind(std::string_view name) {
  if (name == "gradient") return FixtureKind::Gradient;
  if (name == "texture") return FixtureKind::Texture;
  if (name == "checker") return FixtureKind::Checker;
  throw std::invalid_argument("unknown fixture kind '" + std::string(name) +
                              "' (expected gradient, texture or checker)");
}

std::string_view fixture_kind_name(FixtureKind kind) {
  switch (kind) {
    case FixtureKind::Gradient:
      return "gradient";
    case FixtureKind::Texture:
      return "texture";
    case FixtureKind::Checker:
      return "checker";
  }
  return "unknown";
}

TripletData make_fixture(FixtureKind kind, std::size_t size, double damage_fraction,
                         std::uint64_t seed) {
  if (size < 8) throw std::invalid_argument("fixture size must be at least 8");
  if (!(damage_fraction > 0.0 && damage_fraction < 1.0)) {
    throw std::invalid_argument("damage fraction must lie strictly between 0 and 1");
  }
  std::mt19937_64 image_rng(mix_seed(seed, 100 + static_cast<std::uint64_t>(kind)));
  std::mt19937_64 mask_rng(mix_seed(seed, 200));
  Image truth;
  switch (kind) {
    case FixtureKind::Gradient:
      truth = gradient_truth(size, image_rng);
      break;
    case FixtureKind::Texture:
      truth = texture_truth(size, image_rng);
      break;
    case FixtureKind::Checker:
      truth = checker_truth(size, image_rng);
      break;
  }
  truth = quantize_8bit(truth);

  TripletData data;
  data.id = std::string(fixture_kind_name(kind)) + "-" + std::to_string(size) + "-s" + std::to_string(seed);
  data.mask = blotch_mask(size, damage_fraction, mask_rng);
  data.corrupted = composite(truth, Image(size, size, 1.0f), data.mask);
  data.truth = std::move(truth);
  return data;
}

}  // namespace idip
