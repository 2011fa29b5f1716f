#include <gtest/gtest.h>

#include <png.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "idip/base64.hpp"
#include "idip/config.hpp"
#include "idip/error.hpp"
#include "idip/fixtures.hpp"
#include "idip/image.hpp"
#include "idip/image_io.hpp"
#include "temp_dir.hpp"

using namespace idip;
using idip::test::TempDir;
namespace fs = std::filesystem;

namespace {

Image random_8bit(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> level(0, 255);
  Image img(w, h);
  for (auto& v : img.pixels) v = static_cast<float>(level(rng)) / 255.0f;
  return img;
}

std::vector<std::uint8_t> encode_with_format(std::uint32_t format, std::size_t w, std::size_t h,
                                             const void* pixels) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  png_alloc_size_t size = 0;
  png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr);
  std::vector<std::uint8_t> out(size);
  EXPECT_TRUE(png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr));
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> gray_png(std::size_t w, std::size_t h, const std::vector<std::uint8_t>& values) {
  return encode_with_format(PNG_FORMAT_GRAY, w, h, values.data());
}

}  // namespace

TEST(Png, RandomImageRoundTripsBitExactly) {
  TempDir dir;
  auto img = random_8bit(13, 9, 1);
  save_image(img, dir.path() / "a.png");
  auto back = load_image(dir.path() / "a.png");
  EXPECT_EQ(back, img);
  EXPECT_EQ(decode_png(encode_png(img)), img);
}

TEST(Png, BlackImageLoadsAsZeros) {
  auto back = decode_png(encode_png(Image(3, 3, 0.0f)));
  EXPECT_EQ(back.width, 3u);
  for (float v : back.pixels) EXPECT_EQ(v, 0.0f);
}

TEST(Png, SixteenBitRejected) {
  std::vector<std::uint16_t> pixels(4 * 4 * 3, 40000);
  auto bytes = encode_with_format(PNG_FORMAT_RGB | PNG_FORMAT_FLAG_LINEAR, 4, 4, pixels.data());
  try {
    decode_png(bytes);
    FAIL() << "16-bit PNG was accepted";
  } catch (const ImageError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported bit depth"), std::string::npos);
  }
}

TEST(Png, LossyAndForeignFormatsRejected) {
  const std::vector<std::uint8_t> jpeg{0xFF, 0xD8, 0xFF, 0xE0, 0, 0x10, 'J', 'F', 'I', 'F', 0};
  EXPECT_THROW(decode_png(jpeg), ImageError);
  const std::vector<std::uint8_t> text{'h', 'e', 'l', 'l', 'o', ' ', 'w', 'o', 'r', 'l', 'd'};
  EXPECT_THROW(decode_png(text), ImageError);
  auto bytes = encode_png(Image(4, 4, 0.5f));
  bytes.resize(bytes.size() / 2);
  EXPECT_THROW(decode_png(bytes), ImageError);
}

TEST(Png, ExtensionAndMissingFileErrors) {
  TempDir dir;
  EXPECT_THROW(save_image(Image(2, 2), dir.path() / "a.jpg"), ImageError);
  EXPECT_THROW(load_image(dir.path() / "missing.png"), ImageError);
}

TEST(Png, AlphaAndGrayInputsCollapseToRgb) {
  std::vector<std::uint8_t> rgba{10, 20, 30, 255, 40, 50, 60, 255};
  auto img = decode_png(encode_with_format(PNG_FORMAT_RGBA, 2, 1, rgba.data()));
  EXPECT_EQ(img.at(0, 0, 0), 10.0f / 255.0f);
  EXPECT_EQ(img.at(2, 0, 1), 60.0f / 255.0f);
  auto gray = decode_png(gray_png(2, 1, {0, 255}));
  EXPECT_EQ(gray.at(1, 0, 1), 1.0f);
}

TEST(Mask, ThresholdAt128) {
  auto mask = decode_mask_png(gray_png(4, 1, {0, 127, 128, 255}));
  EXPECT_FALSE(mask.known(0, 0));
  EXPECT_FALSE(mask.known(1, 0));
  EXPECT_TRUE(mask.known(2, 0));
  EXPECT_TRUE(mask.known(3, 0));
}

TEST(Mask, AllWhiteAllBlackCheckerboard) {
  EXPECT_EQ(decode_mask_png(gray_png(5, 5, std::vector<std::uint8_t>(25, 255))).known_count(), 25u);
  EXPECT_EQ(decode_mask_png(gray_png(5, 5, std::vector<std::uint8_t>(25, 0))).known_count(), 0u);
  std::vector<std::uint8_t> checker(8 * 8);
  for (std::size_t i = 0; i < checker.size(); ++i) checker[i] = ((i % 8 + i / 8) % 2) ? 255 : 0;
  auto m = decode_mask_png(gray_png(8, 8, checker));
  EXPECT_EQ(m.known_count(), 32u);
  EXPECT_DOUBLE_EQ(m.known_fraction(), 0.5);
}

TEST(Mask, BinarizationIdempotentAndLossless) {
  TempDir dir;
  std::vector<std::uint8_t> noisy(64);
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] = static_cast<std::uint8_t>(i * 37 % 256);
  auto once = decode_mask_png(gray_png(8, 8, noisy));
  save_mask(once, dir.path() / "m.png");
  auto twice = load_mask(dir.path() / "m.png");
  EXPECT_EQ(once, twice);
  EXPECT_EQ(decode_mask_png(encode_mask_png(twice)), twice);
}

TEST(Fixture, DamageCountForQuarterFraction) {
  for (auto kind : {FixtureKind::Gradient, FixtureKind::Texture, FixtureKind::Checker}) {
    for (std::uint64_t seed : {0u, 1u, 2u, 99u}) {
      auto f = make_fixture(kind, 64, 0.25, seed);
      EXPECT_GE(f.mask.damaged_count(), 942u);
      EXPECT_LE(f.mask.damaged_count(), 1106u);
    }
  }
}

TEST(Fixture, SameSeedSameTriplet) {
  auto a = make_fixture(FixtureKind::Texture, 32, 0.3, 5);
  auto b = make_fixture(FixtureKind::Texture, 32, 0.3, 5);
  auto c = make_fixture(FixtureKind::Texture, 32, 0.3, 6);
  EXPECT_EQ(a.id, b.id);
  EXPECT_EQ(a.corrupted, b.corrupted);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.truth, b.truth);
  EXPECT_NE(a.mask, c.mask);
}

TEST(Fixture, CheckerHasExactlyTwoColors) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    auto f = make_fixture(FixtureKind::Checker, 64, 0.25, seed);
    ASSERT_TRUE(f.truth.has_value());
    std::set<std::array<float, 3>> colors;
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x)
        colors.insert({f.truth->at(0, y, x), f.truth->at(1, y, x), f.truth->at(2, y, x)});
    EXPECT_EQ(colors.size(), 2u);
  }
}

TEST(Fixture, CorruptedMatchesTruthOnKnownPixels) {
  auto f = make_fixture(FixtureKind::Gradient, 32, 0.25, 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        if (f.mask.known(x, y)) EXPECT_EQ(f.corrupted.at(c, y, x), f.truth->at(c, y, x));
        else EXPECT_EQ(f.corrupted.at(c, y, x), 1.0f);
      }
  EXPECT_EQ(decode_png(encode_png(*f.truth)), *f.truth);
}

TEST(Fixture, RejectsDegenerateInput) {
  EXPECT_THROW(make_fixture(FixtureKind::Gradient, 4, 0.25, 0), std::invalid_argument);
  EXPECT_THROW(make_fixture(FixtureKind::Gradient, 32, 0.0, 0), std::invalid_argument);
  EXPECT_THROW(make_fixture(FixtureKind::Gradient, 32, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(parse_fixture_kind("stripes"), std::invalid_argument);
  EXPECT_EQ(parse_fixture_kind("checker"), FixtureKind::Checker);
  EXPECT_EQ(fixture_kind_name(FixtureKind::Texture), "texture");
}

TEST(Dataset, WriteScanLoadRoundTrip) {
  TempDir dir;
  auto a = make_fixture(FixtureKind::Checker, 16, 0.25, 1);
  auto b = make_fixture(FixtureKind::Gradient, 16, 0.25, 2);
  b.truth.reset();
  write_triplet(dir.path(), a);
  write_triplet(dir.path(), b);
  fs::create_directories(dir.path() / "not-a-triplet");
  auto found = scan_dataset(dir.path());
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0].id, a.id);
  EXPECT_EQ(found[1].id, b.id);
  auto la = load_triplet(found[0]);
  EXPECT_EQ(la.corrupted, a.corrupted);
  EXPECT_EQ(la.mask, a.mask);
  EXPECT_EQ(la.truth, a.truth);
  EXPECT_FALSE(load_triplet(found[1]).truth.has_value());
}

TEST(Dataset, SizeMismatchDetectedAtTripletLoad) {
  TempDir dir;
  auto a = make_fixture(FixtureKind::Checker, 16, 0.25, 1);
  auto t = write_triplet(dir.path(), a);
  save_mask(DamageMask(8, 8, true), t.mask);
  EXPECT_THROW(load_triplet(t), ImageError);
}

TEST(Geometry, PadReflectsAndMarksPaddingDamaged) {
  auto img = random_8bit(5, 3, 2);
  auto padded = pad_to_multiple(img, 4);
  EXPECT_EQ(padded.width, 8u);
  EXPECT_EQ(padded.height, 4u);
  EXPECT_EQ(padded.at(1, 0, 5), img.at(1, 0, 3));
  EXPECT_EQ(padded.at(0, 3, 2), img.at(0, 1, 2));
  EXPECT_EQ(crop(padded, 5, 3), img);
  auto mask = pad_to_multiple(DamageMask(5, 3, true), 4);
  EXPECT_EQ(mask.known_count(), 15u);
  EXPECT_FALSE(mask.known(5, 0));
  auto same = pad_to_multiple(img, 1);
  EXPECT_EQ(same, img);
}

TEST(Geometry, CompositeAndDownscale) {
  Image known(2, 1, 1.0f), fill(2, 1, 0.0f);
  DamageMask mask(2, 1, true);
  mask.set_known(1, 0, false);
  auto out = composite(known, fill, mask);
  EXPECT_EQ(out.at(0, 0, 0), 1.0f);
  EXPECT_EQ(out.at(0, 0, 1), 0.0f);
  auto big = random_8bit(600, 300, 3);
  auto small = downscale_nearest(big, 256);
  EXPECT_EQ(small.width, 256u);
  EXPECT_EQ(small.height, 128u);
  EXPECT_EQ(downscale_nearest(small, 256), small);
}

TEST(Base64, RoundTripAndStrictness) {
  for (std::string s : {"", "f", "fo", "foo", "foob", "fooba", "foobar"}) {
    std::vector<std::uint8_t> bytes(s.begin(), s.end());
    EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  }
  std::vector<std::uint8_t> foobar{'f', 'o', 'o', 'b', 'a', 'r'};
  EXPECT_EQ(base64_encode(foobar), "Zm9vYmFy");
  EXPECT_THROW(base64_decode("Zm9v!mFy"), std::invalid_argument);
  EXPECT_THROW(base64_decode("Zm9"), std::invalid_argument);
  std::vector<float> values{0.0f, -1.5f, 3.14159f, 1e-30f};
  EXPECT_EQ(decode_floats(encode_floats(values)), values);
}

TEST(Config, JsonRoundTripAndValidation) {
  RestorationConfig c;
  c.seed = 42;
  c.network.channels = {8, 16, 32};
  c.adam.lr = 0.002;
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  auto partial = config_from_json(nlohmann::json{{"seed", 3}, {"iterations_per_phase", 10}});
  EXPECT_EQ(partial.seed, 3u);
  EXPECT_EQ(partial.iterations_per_phase, 10);
  EXPECT_EQ(partial.network, NetworkConfig{});
  EXPECT_THROW(config_from_json(nlohmann::json{{"learning_rate", 0.1}}), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json{{"depth", 2}}), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json{{"lr", -1.0}}), std::invalid_argument);
  TempDir dir;
  save_config(c, dir.path() / "c.json");
  EXPECT_EQ(load_config(dir.path() / "c.json"), c);
}
