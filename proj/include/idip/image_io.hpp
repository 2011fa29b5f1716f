#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idip/image.hpp"

namespace idip {

// PNG is the only supported raster format. Lossy inputs are rejected so
// mask edges and metric values never pass through a lossy codec.

std::uint8_t to_byte(float value);

Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Image& image);
Image load_image(const std::filesystem::path& path);
void save_image(const Image& image, const std::filesystem::path& path);

/// Grayscale value >= 128 is known, < 128 damaged.
DamageMask decode_mask_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_mask_png(const DamageMask& mask);
DamageMask load_mask(const std::filesystem::path& path);
void save_mask(const DamageMask& mask, const std::filesystem::path& path);

/// `<root>/<id>/{corrupted,mask,truth}.png`, truth optional.
struct DatasetTriplet {
  std::string id;
  std::filesystem::path corrupted;
  std::filesystem::path mask;
  std::optional<std::filesystem::path> truth;
};

struct TripletData {
  std::string id;
  Image corrupted;
  DamageMask mask;
  std::optional<Image> truth;
};

/// Triplet directories under `root`, sorted by id.
std::vector<DatasetTriplet> scan_dataset(const std::filesystem::path& root);
DatasetTriplet triplet_at(const std::filesystem::path& directory);
/// Decodes all files and checks they agree in size.
TripletData load_triplet(const DatasetTriplet& triplet);
DatasetTriplet write_triplet(const std::filesystem::path& root, const TripletData& data);

}  // namespace idip
