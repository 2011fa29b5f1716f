#include "idip/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "idip/error.hpp"

namespace idip {

namespace fs = std::filesystem;

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void check_signature(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) return;
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    throw ImageError("lossy format (JPEG) is not supported; use PNG");
  }
  throw ImageError("unsupported format: not a PNG stream");
}

// Decodes to 8-bit samples of the requested simplified-API format.
std::vector<std::uint8_t> decode_raw(std::span<const std::uint8_t> bytes, png_uint_32 format,
                                     std::size_t& width, std::size_t& height) {
  check_signature(bytes);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    std::string message = image.message;
    png_image_free(&image);
    throw ImageError("corrupt PNG: " + message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw ImageError("unsupported bit depth: only 8-bit PNG is accepted");
  }
  image.format = format;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw ImageError("corrupt PNG: " + message);
  }
  width = image.width;
  height = image.height;
  return pixels;
}

std::vector<std::uint8_t> encode_raw(const std::vector<std::uint8_t>& pixels, std::size_t width,
                                     std::size_t height, png_uint_32 format) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw ImageError(std::string("PNG encoding failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw ImageError(std::string("PNG encoding failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("short write to " + path.string());
}

void require_png_extension(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext != ".png") throw ImageError("unsupported format '" + ext + "' for " + path.string() + "; use .png");
}

template <typename Fn>
auto with_path(const fs::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ImageError& e) {
    throw ImageError(path.string() + ": " + e.what());
  }
}

}  // namespace

std::uint8_t to_byte(float value) {
  const float clamped = std::clamp(value, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  std::size_t w = 0, h = 0;
  auto raw = decode_raw(bytes, PNG_FORMAT_RGB, w, h);
  Image image(w, h);
  const auto plane = image.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < Image::kChannels; ++c) {
      image.pixels[c * plane + i] = static_cast<float>(raw[i * 3 + c]) / 255.0f;
    }
  }
  return image;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  const auto plane = image.plane_size();
  std::vector<std::uint8_t> raw(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < Image::kChannels; ++c) raw[i * 3 + c] = to_byte(image.pixels[c * plane + i]);
  }
  return encode_raw(raw, image.width, image.height, PNG_FORMAT_RGB);
}

Image load_image(const fs::path& path) {
  return with_path(path, [&] {
    require_png_extension(path);
    return decode_png(read_file(path));
  });
}

void save_image(const Image& image, const fs::path& path) {
  with_path(path, [&] {
    require_png_extension(path);
    write_file(path, encode_png(image));
  });
}

DamageMask decode_mask_png(std::span<const std::uint8_t> bytes) {
  std::size_t w = 0, h = 0;
  auto raw = decode_raw(bytes, PNG_FORMAT_GRAY, w, h);
  DamageMask mask(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) mask.set_known(x, y, raw[y * w + x] >= 128);
  return mask;
}

std::vector<std::uint8_t> encode_mask_png(const DamageMask& mask) {
  std::vector<std::uint8_t> raw(mask.size());
  std::transform(mask.values().begin(), mask.values().end(), raw.begin(),
                 [](std::uint8_t k) { return static_cast<std::uint8_t>(k ? 255 : 0); });
  return encode_raw(raw, mask.width(), mask.height(), PNG_FORMAT_GRAY);
}

DamageMask load_mask(const fs::path& path) {
  return with_path(path, [&] {
    require_png_extension(path);
    return decode_mask_png(read_file(path));
  });
}

void save_mask(const DamageMask& mask, const fs::path& path) {
  with_path(path, [&] {
    require_png_extension(path);
    write_file(path, encode_mask_png(mask));
  });
}

DatasetTriplet triplet_at(const fs::path& directory) {
  DatasetTriplet t;
  t.id = directory.filename().string();
  t.corrupted = directory / "corrupted.png";
  t.mask = directory / "mask.png";
  if (fs::exists(directory / "truth.png")) t.truth = directory / "truth.png";
  if (!fs::exists(t.corrupted) || !fs::exists(t.mask)) {
    throw ImageError(directory.string() + ": triplet needs corrupted.png and mask.png");
  }
  return t;
}

std::vector<DatasetTriplet> scan_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw ImageError("dataset root " + root.string() + " is not a directory");
  std::vector<DatasetTriplet> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    if (!fs::exists(entry.path() / "corrupted.png") || !fs::exists(entry.path() / "mask.png")) continue;
    out.push_back(triplet_at(entry.path()));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

TripletData load_triplet(const DatasetTriplet& triplet) {
  TripletData data;
  data.id = triplet.id;
  data.corrupted = load_image(triplet.corrupted);
  data.mask = load_mask(triplet.mask);
  if (triplet.truth) data.truth = load_image(*triplet.truth);
  auto mismatch = [&](std::size_t w, std::size_t h) {
    return w != data.corrupted.width || h != data.corrupted.height;
  };
  if (mismatch(data.mask.width(), data.mask.height()) ||
      (data.truth && mismatch(data.truth->width, data.truth->height))) {
    throw ImageError("triplet " + triplet.id + ": image, mask and truth sizes differ");
  }
  return data;
}

DatasetTriplet write_triplet(const fs::path& root, const TripletData& data) {
  const auto dir = root / data.id;
  fs::create_directories(dir);
  save_image(data.corrupted, dir / "corrupted.png");
  save_mask(data.mask, dir / "mask.png");
  if (data.truth) {
    save_image(*data.truth, dir / "truth.png");
  } else if (fs::exists(dir / "truth.png")) {
    fs::remove(dir / "truth.png");
  }
  return triplet_at(dir);
}

}  // namespace idip
