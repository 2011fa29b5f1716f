#include "idip/image.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "idip/error.hpp"
#include "idip/ops.hpp"

namespace idip {

namespace {

std::size_t round_up(std::size_t value, std::size_t multiple) {
  if (multiple == 0) throw std::invalid_argument("padding multiple must be positive");
  return (value + multiple - 1) / multiple * multiple;
}

}  // namespace

std::size_t DamageMask::known_count() const {
  return static_cast<std::size_t>(std::count(known_.begin(), known_.end(), std::uint8_t{1}));
}

double DamageMask::known_fraction() const {
  return known_.empty() ? 0.0 : static_cast<double>(known_count()) / static_cast<double>(size());
}

Image composite(const Image& known_source, const Image& fill, const DamageMask& mask) {
  if (known_source.width != fill.width || known_source.height != fill.height ||
      mask.width() != fill.width || mask.height() != fill.height) {
    throw ShapeError("composite: image and mask sizes differ");
  }
  Image out = fill;
  const auto plane = out.plane_size();
  const auto& known = mask.values();
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      if (known[i]) out.pixels[c * plane + i] = known_source.pixels[c * plane + i];
    }
  }
  return out;
}

Image crop(const Image& image, std::size_t width, std::size_t height) {
  if (width > image.width || height > image.height) throw ShapeError("crop larger than image");
  if (width == image.width && height == image.height) return image;
  Image out(width, height);
  for (std::size_t c = 0; c < Image::kChannels; ++c)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) out.at(c, y, x) = image.at(c, y, x);
  return out;
}

DamageMask crop(const DamageMask& mask, std::size_t width, std::size_t height) {
  if (width > mask.width() || height > mask.height()) throw ShapeError("crop larger than mask");
  DamageMask out(width, height);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) out.set_known(x, y, mask.known(x, y));
  return out;
}

Image pad_to_multiple(const Image& image, std::size_t multiple) {
  const auto w = round_up(image.width, multiple);
  const auto h = round_up(image.height, multiple);
  if (w == image.width && h == image.height) return image;
  Image out(w, h);
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const auto sy = reflect_index(static_cast<std::ptrdiff_t>(y), image.height);
      for (std::size_t x = 0; x < w; ++x) {
        out.at(c, y, x) = image.at(c, sy, reflect_index(static_cast<std::ptrdiff_t>(x), image.width));
      }
    }
  }
  return out;
}

DamageMask pad_to_multiple(const DamageMask& mask, std::size_t multiple) {
  const auto w = round_up(mask.width(), multiple);
  const auto h = round_up(mask.height(), multiple);
  if (w == mask.width() && h == mask.height()) return mask;
  DamageMask out(w, h, false);
  for (std::size_t y = 0; y < mask.height(); ++y)
    for (std::size_t x = 0; x < mask.width(); ++x) out.set_known(x, y, mask.known(x, y));
  return out;
}

Image downscale_nearest(const Image& image, std::size_t max_side) {
  const auto side = std::max(image.width, image.height);
  if (max_side == 0 || side <= max_side) return image;
  const auto w = std::max<std::size_t>(1, image.width * max_side / side);
  const auto h = std::max<std::size_t>(1, image.height * max_side / side);
  Image out(w, h);
  for (std::size_t c = 0; c < Image::kChannels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.at(c, y, x) = image.at(c, y * image.height / h, x * image.width / w);
  return out;
}

}  // namespace idip
