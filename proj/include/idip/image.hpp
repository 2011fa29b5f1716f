#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace idip {

/// Planar RGB image with channel values in [0, 1], layout [3][H][W].
struct Image {
  static constexpr std::size_t kChannels = 3;

  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, float fill = 0.0f)
      : width(w), height(h), pixels(kChannels * w * h, fill) {}

  std::size_t plane_size() const { return width * height; }
  float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Per-pixel indicator: 1 = known (enters the loss), 0 = damaged.
class DamageMask {
 public:
  DamageMask() = default;
  DamageMask(std::size_t width, std::size_t height, bool known = true)
      : width_(width), height_(height), known_(width * height, known ? 1 : 0) {}

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return known_.size(); }

  bool known(std::size_t x, std::size_t y) const { return known_[y * width_ + x] != 0; }
  void set_known(std::size_t x, std::size_t y, bool value) { known_[y * width_ + x] = value ? 1 : 0; }

  std::size_t known_count() const;
  std::size_t damaged_count() const { return size() - known_count(); }
  double known_fraction() const;

  const std::vector<std::uint8_t>& values() const { return known_; }

  friend bool operator==(const DamageMask&, const DamageMask&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> known_;
};

/// Known pixels from `known_source`, damaged pixels from `fill`.
Image composite(const Image& known_source, const Image& fill, const DamageMask& mask);

/// Top-left `width` x `height` region.
Image crop(const Image& image, std::size_t width, std::size_t height);
DamageMask crop(const DamageMask& mask, std::size_t width, std::size_t height);

/// Reflection-pads right/bottom edges up to the next multiple. Padded mask
/// pixels are marked damaged so they never enter the loss.
Image pad_to_multiple(const Image& image, std::size_t multiple);
DamageMask pad_to_multiple(const DamageMask& mask, std::size_t multiple);

/// Nearest-neighbour downscale so that neither side exceeds `max_side`.
Image downscale_nearest(const Image& image, std::size_t max_side);

}  // namespace idip
