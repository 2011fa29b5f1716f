#include "idip/metrics.hpp"

#include <cstdio>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "idip/error.hpp"
#include "idip/image_io.hpp"

namespace idip {

namespace {

void require_same_shape(const Plane& a, const Plane& b, const char* op) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError(std::string(op) + ": image sizes differ (" + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height) + ")");
  }
}

// Summed-area table with a zero border row/column: (w+1) x (h+1).
class IntegralImage {
 public:
  template <typename Fn>
  IntegralImage(std::size_t w, std::size_t h, Fn&& value) : stride_(w + 1), table_((w + 1) * (h + 1), 0.0) {
    for (std::size_t y = 0; y < h; ++y) {
      double row = 0.0;
      for (std::size_t x = 0; x < w; ++x) {
        row += value(x, y);
        table_[(y + 1) * stride_ + x + 1] = table_[y * stride_ + x + 1] + row;
      }
    }
  }

  double box(std::size_t x, std::size_t y, std::size_t k) const {
    return table_[(y + k) * stride_ + x + k] - table_[y * stride_ + x + k] -
           table_[(y + k) * stride_ + x] + table_[y * stride_ + x];
  }

 private:
  std::size_t stride_;
  std::vector<double> table_;
};

}  // namespace

double ssim(const Plane& a, const Plane& b, const SsimParams& params) {
  require_same_shape(a, b, "ssim");
  const std::size_t k = params.window;
  if (k == 0 || k % 2 == 0) throw std::invalid_argument("ssim window must be a positive odd size");
  if (k > a.width || k > a.height) {
    throw std::invalid_argument("ssim window " + std::to_string(k) + " exceeds image size");
  }
  const std::size_t w = a.width, h = a.height;
  IntegralImage sa(w, h, [&](auto x, auto y) { return a.at(x, y); });
  IntegralImage sb(w, h, [&](auto x, auto y) { return b.at(x, y); });
  IntegralImage saa(w, h, [&](auto x, auto y) { return a.at(x, y) * a.at(x, y); });
  IntegralImage sbb(w, h, [&](auto x, auto y) { return b.at(x, y) * b.at(x, y); });
  IntegralImage sab(w, h, [&](auto x, auto y) { return a.at(x, y) * b.at(x, y); });
  const double n = static_cast<double>(k * k);
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t y = 0; y + k <= h; ++y) {
    for (std::size_t x = 0; x + k <= w; ++x) {
      const double mu_a = sa.box(x, y, k) / n;
      const double mu_b = sb.box(x, y, k) / n;
      const double var_a = saa.box(x, y, k) / n - mu_a * mu_a;
      const double var_b = sbb.box(x, y, k) / n - mu_b * mu_b;
      const double cov = sab.box(x, y, k) / n - mu_a * mu_b;
      const double num = (2.0 * (mu_a * mu_b) + params.c1) * (2.0 * cov + params.c2);
      const double den = (mu_a * mu_a + mu_b * mu_b + params.c1) * (var_a + var_b + params.c2);
      total += num / den;
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

double dssim(const Plane& a, const Plane& b, const SsimParams& params) {
  return dssim_from_ssim(ssim(a, b, params));
}

double mse(const Plane& a, const Plane& b) {
  require_same_shape(a, b, "mse");
  double total = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    total += d * d;
  }
  return total / static_cast<double>(a.values.size());
}

double lmse(const Plane& a, const Plane& b, std::size_t k) {
  require_same_shape(a, b, "lmse");
  if (k == 0 || k > a.width || k > a.height) {
    throw std::invalid_argument("lmse window " + std::to_string(k) + " must lie in [1, min(H, W)]");
  }
  // Each pixel contributes once per window covering it, so the mean of
  // window MSEs is a coverage-weighted mean of squared differences.
  const std::size_t w = a.width, h = a.height;
  auto coverage = [k](std::size_t i, std::size_t n) {
    const std::size_t lo = i + 1 >= k ? i + 1 - k : 0;
    const std::size_t hi = std::min(i, n - k);
    return static_cast<double>(hi - lo + 1);
  };
  double total = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    const double cy = coverage(y, h);
    for (std::size_t x = 0; x < w; ++x) {
      const double d = a.at(x, y) - b.at(x, y);
      total += d * d * (cy * coverage(x, w));
    }
  }
  const double windows = static_cast<double>((w - k + 1) * (h - k + 1));
  return total / (static_cast<double>(k * k) * windows);
}

Plane luminance(const Image& image) {
  Plane out(image.width, image.height);
  const auto plane = image.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    out.values[i] = 0.299 * image.pixels[i] + 0.587 * image.pixels[plane + i] +
                    0.114 * image.pixels[2 * plane + i];
  }
  return out;
}

Plane channel(const Image& image, std::size_t c, double scale) {
  Plane out(image.width, image.height);
  const auto plane = image.plane_size();
  for (std::size_t i = 0; i < plane; ++i) out.values[i] = scale * image.pixels[c * plane + i];
  return out;
}

Image quantize_8bit(const Image& image) {
  Image out = image;
  for (auto& v : out.pixels) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

MetricReport evaluate(const Image& restored, const Image& truth, std::size_t window_k,
                      std::string image_id) {
  if (restored.width != truth.width || restored.height != truth.height) {
    throw ShapeError("evaluate: restored and ground-truth sizes differ");
  }
  const auto plane = truth.plane_size();
  auto levels = [plane](const Image& img, std::size_t c) {
    Plane p(img.width, img.height);
    for (std::size_t i = 0; i < plane; ++i) p.values[i] = to_byte(img.pixels[c * plane + i]);
    return p;
  };
  auto luma = [&](const Image& img) {
    Plane y(img.width, img.height);
    for (std::size_t i = 0; i < plane; ++i) {
      y.values[i] = (0.299 * to_byte(img.pixels[i]) + 0.587 * to_byte(img.pixels[plane + i]) +
                     0.114 * to_byte(img.pixels[2 * plane + i])) /
                    255.0;
    }
    return y;
  };

  MetricReport report;
  report.image_id = std::move(image_id);
  report.window_k = window_k;
  const auto la = luma(restored), lb = luma(truth);
  SsimParams params;
  const auto side = std::min(truth.width, truth.height);
  params.window = std::min(params.window, side % 2 == 1 ? side : side - 1);
  report.ssim = ssim(la, lb, params);
  report.dssim = dssim_from_ssim(report.ssim);
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    const auto a = levels(restored, c), b = levels(truth, c);
    report.lmse += lmse(a, b, window_k) / 3.0;
    report.mse += mse(a, b) / 3.0;
  }
  return report;
}

std::string to_json_line(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["image_id"] = report.image_id;
  j["dssim"] = report.dssim;
  j["lmse"] = report.lmse;
  j["mse"] = report.mse;
  j["window_k"] = report.window_k;
  j["ssim"] = report.ssim;
  return j.dump();
}

std::string format_table(std::span<const MetricReport> reports) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-28s | %8s | %10s | %10s\n", "image", "DSSIM", "LMSE", "MSE");
  out += line;
  out += std::string(28, '-') + "-+-" + std::string(8, '-') + "-+-" + std::string(10, '-') + "-+-" +
         std::string(10, '-') + "\n";
  double dssim_sum = 0.0, lmse_sum = 0.0, mse_sum = 0.0;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-28s | %8.4f | %10.2f | %10.2f\n", r.image_id.c_str(), r.dssim,
                  r.lmse, r.mse);
    out += line;
    dssim_sum += r.dssim;
    lmse_sum += r.lmse;
    mse_sum += r.mse;
  }
  if (!reports.empty()) {
    const double n = static_cast<double>(reports.size());
    std::snprintf(line, sizeof line, "%-28s | %8.4f | %10.2f | %10.2f\n", "mean", dssim_sum / n,
                  lmse_sum / n, mse_sum / n);
    out += line;
  }
  return out;
}

}  // namespace idip
