#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <random>

#include "idip/error.hpp"
#include "idip/metrics.hpp"
#include "metric_oracle.hpp"

using namespace idip;
using idip::testing::random_plane;

namespace {

Plane flipped(const Plane& p) {
  Plane out(p.width, p.height);
  for (std::size_t y = 0; y < p.height; ++y)
    for (std::size_t x = 0; x < p.width; ++x) out.at(x, y) = p.at(p.width - 1 - x, y);
  return out;
}

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> level(0, 255);
  Image img(w, h);
  for (auto& v : img.pixels) v = static_cast<float>(level(rng)) / 255.0f;
  return img;
}

}  // namespace

TEST(Ssim, IdenticalImagesGiveExactlyOne) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) {
    auto a = random_plane(20, 17, rng);
    EXPECT_EQ(ssim(a, a), 1.0);
    EXPECT_EQ(dssim(a, a), 0.0);
  }
}

TEST(Ssim, ConstantZeroAgainstConstantOne) {
  SsimParams p;
  const double expected = p.c1 / (1.0 + p.c1);
  EXPECT_NEAR(ssim(Plane(16, 16, 0.0), Plane(16, 16, 1.0)), expected, 1e-9);
  EXPECT_NEAR(expected, 9.999e-5, 1e-8);
}

TEST(Ssim, ConstantPairsMatchClosedForm) {
  SsimParams p;
  for (auto [a, b] : {std::pair{0.25, 0.75}, {0.5, 0.5}, {0.1, 0.9}, {1.0, 0.0}}) {
    EXPECT_NEAR(ssim(Plane(12, 12, a), Plane(12, 12, b)), idip::testing::constant_ssim(a, b, p.c1), 1e-9);
  }
}

TEST(Ssim, MatchesBruteForceOnRandomPairs) {
  std::mt19937_64 rng(2024);
  SsimParams p;
  for (int i = 0; i < 100; ++i) {
    auto a = random_plane(16, 16, rng);
    auto b = random_plane(16, 16, rng);
    EXPECT_NEAR(ssim(a, b, p), idip::testing::brute_force_ssim(a, b, p.window, p.c1, p.c2), 1e-6);
  }
}

TEST(Ssim, SmallWindowsMatchBruteForce) {
  std::mt19937_64 rng(5);
  for (std::size_t k : {1u, 3u, 7u}) {
    SsimParams p;
    p.window = k;
    auto a = random_plane(9, 13, rng);
    auto b = random_plane(9, 13, rng);
    EXPECT_NEAR(ssim(a, b, p), idip::testing::brute_force_ssim(a, b, k, p.c1, p.c2), 1e-9);
  }
}

TEST(Ssim, SymmetricAndBounded) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    auto a = random_plane(16, 16, rng);
    auto b = random_plane(16, 16, rng);
    const double s = ssim(a, b);
    EXPECT_EQ(s, ssim(b, a));
    EXPECT_LE(std::abs(s), 1.0);
    const double d = dssim(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
  }
}

TEST(Ssim, Rejections) {
  EXPECT_THROW(ssim(Plane(16, 16), Plane(16, 15)), ShapeError);
  SsimParams even;
  even.window = 4;
  EXPECT_THROW(ssim(Plane(16, 16), Plane(16, 16), even), std::invalid_argument);
  EXPECT_THROW(ssim(Plane(8, 8), Plane(8, 8)), std::invalid_argument);
}

TEST(Dssim, FormulaEndpoints) {
  EXPECT_EQ(dssim_from_ssim(1.0), 0.0);
  EXPECT_EQ(dssim_from_ssim(-1.0), 1.0);
  EXPECT_NEAR(dssim_from_ssim(0.5546), 0.2227, 1e-12);
}

TEST(Dssim, AffineDecreasingInSsim) {
  double previous = dssim_from_ssim(-1.0);
  for (double s = -0.9; s <= 1.0; s += 0.1) {
    const double d = dssim_from_ssim(s);
    EXPECT_LT(d, previous);
    EXPECT_NEAR(previous - d, 0.05, 1e-12);
    previous = d;
  }
}

TEST(Lmse, FourPixelArithmetic) {
  Plane a(2, 2, 0.0), b(2, 2, 0.0);
  b.at(0, 0) = 255.0;
  EXPECT_DOUBLE_EQ(lmse(a, b, 1), 16256.25);
  EXPECT_DOUBLE_EQ(mse(a, b), 16256.25);
}

TEST(Lmse, UnitWindowEqualsMse) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    auto a = random_plane(23, 19, rng, 255.0);
    auto b = random_plane(23, 19, rng, 255.0);
    EXPECT_NEAR(lmse(a, b, 1), mse(a, b), 1e-9);
  }
}

TEST(Lmse, MatchesBruteForceWindows) {
  std::mt19937_64 rng(8);
  for (std::size_t k : {1u, 2u, 3u, 5u, 11u}) {
    auto a = random_plane(17, 12, rng, 255.0);
    auto b = random_plane(17, 12, rng, 255.0);
    EXPECT_NEAR(lmse(a, b, k), idip::testing::brute_force_lmse(a, b, k), 1e-8) << "k=" << k;
  }
}

TEST(Lmse, ZeroOnIdenticalAndRejectsBadWindow) {
  std::mt19937_64 rng(9);
  auto a = random_plane(10, 10, rng);
  for (std::size_t k : {1u, 4u, 10u}) EXPECT_EQ(lmse(a, a, k), 0.0);
  EXPECT_THROW(lmse(a, a, 0), std::invalid_argument);
  EXPECT_THROW(lmse(a, a, 11), std::invalid_argument);
  EXPECT_THROW(lmse(a, Plane(10, 9), 1), ShapeError);
}

TEST(Metrics, InvariantUnderHorizontalFlip) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 10; ++i) {
    auto a = random_plane(16, 14, rng);
    auto b = random_plane(16, 14, rng);
    auto fa = flipped(a), fb = flipped(b);
    EXPECT_NEAR(ssim(a, b), ssim(fa, fb), 1e-12);
    EXPECT_NEAR(mse(a, b), mse(fa, fb), 1e-12);
    EXPECT_NEAR(lmse(a, b, 3), lmse(fa, fb, 3), 1e-12);
  }
}

TEST(Luminance, Bt601Weights) {
  Image img(1, 1);
  img.pixels = {1.0f, 0.0f, 0.0f};
  EXPECT_NEAR(luminance(img).values[0], 0.299, 1e-7);
  img.pixels = {0.0f, 1.0f, 0.0f};
  EXPECT_NEAR(luminance(img).values[0], 0.587, 1e-7);
  img.pixels = {1.0f, 1.0f, 1.0f};
  EXPECT_NEAR(luminance(img).values[0], 1.0, 1e-7);
}

TEST(Evaluate, IdenticalImagesScorePerfect) {
  auto img = random_image(32, 24, 1);
  auto r = evaluate(img, img, 1, "same");
  EXPECT_EQ(r.image_id, "same");
  EXPECT_EQ(r.ssim, 1.0);
  EXPECT_EQ(r.dssim, 0.0);
  EXPECT_EQ(r.lmse, 0.0);
  EXPECT_EQ(r.mse, 0.0);
}

TEST(Evaluate, UsesByteScaleAveragedOverChannels) {
  Image a(2, 2, 0.0f), b(2, 2, 0.0f);
  b.at(0, 0, 0) = 1.0f;  // one red pixel at full intensity
  auto r = evaluate(a, b, 1, "x");
  EXPECT_DOUBLE_EQ(r.mse, 16256.25 / 3.0);
  EXPECT_DOUBLE_EQ(r.lmse, r.mse);
}

TEST(Evaluate, SmallImagesClampWindow) {
  auto a = random_image(8, 6, 2), b = random_image(8, 6, 3);
  auto r = evaluate(a, b, 1, "small");
  EXPECT_NEAR(r.dssim, (1.0 - r.ssim) / 2.0, 1e-15);
  EXPECT_LT(r.ssim, 1.0);
}

TEST(Report, JsonLineAndTable) {
  std::vector<MetricReport> reports{{"a", 0.5, 0.25, 10.0, 10.0, 1}, {"b", 0.7, 0.15, 20.0, 20.0, 1}};
  auto j = nlohmann::json::parse(to_json_line(reports[0]));
  EXPECT_EQ(j.at("image_id"), "a");
  EXPECT_DOUBLE_EQ(j.at("dssim").get<double>(), 0.25);
  EXPECT_DOUBLE_EQ(j.at("lmse").get<double>(), 10.0);
  EXPECT_EQ(j.at("window_k").get<int>(), 1);
  const auto table = format_table(reports);
  EXPECT_NE(table.find("DSSIM"), std::string::npos);
  EXPECT_NE(table.find("LMSE"), std::string::npos);
  EXPECT_NE(table.find("mean"), std::string::npos);
  EXPECT_NE(table.find("0.2000"), std::string::npos);
}
