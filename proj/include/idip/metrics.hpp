#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "idip/image.hpp"

namespace idip {

/// Single-channel image in double precision, row-major.
struct Plane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), values(w * h, fill) {}
  double& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

struct SsimParams {
  std::size_t window = 11;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

/// Mean over all valid window positions (stride 1, uniform weights,
/// population statistics) of the per-window SSIM.
double ssim(const Plane& a, const Plane& b, const SsimParams& params = {});
inline double dssim_from_ssim(double s) { return (1.0 - s) / 2.0; }
double dssim(const Plane& a, const Plane& b, const SsimParams& params = {});

double mse(const Plane& a, const Plane& b);
/// Mean over all k x k windows (stride 1) of the per-window MSE.
double lmse(const Plane& a, const Plane& b, std::size_t k);

/// BT.601 luma of an RGB image, same scale as the input.
Plane luminance(const Image& image);
/// One channel scaled by `scale`.
Plane channel(const Image& image, std::size_t c, double scale = 1.0);
/// Rounds every channel to the nearest 8-bit level (values stay in [0, 1]).
Image quantize_8bit(const Image& image);

struct MetricReport {
  std::string image_id;
  double ssim = 0.0;
  double dssim = 0.0;
  double lmse = 0.0;
  double mse = 0.0;
  std::size_t window_k = 1;
};

/// Full-image metrics on 8-bit-quantized inputs: SSIM/DSSIM on unit-scale
/// luma, LMSE/MSE on the 0-255 scale averaged over the RGB channels.
MetricReport evaluate(const Image& restored, const Image& truth, std::size_t window_k,
                      std::string image_id);

std::string to_json_line(const MetricReport& report);
std::string format_table(std::span<const MetricReport> reports);

}  // namespace idip
