#include "proxyforge/qfilter.hpp"

#include <algorithm>
#include <cmath>

#include "proxyforge/color.hpp"
#include "proxyforge/kernels.hpp"

namespace proxyforge {

std::string to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kNone: return "none";
    case RejectReason::kBlurry: return "blurry";
    case RejectReason::kDarkOrDesaturated: return "dark_or_desaturated";
  }
  return "none";
}

RejectReason reject_reason_from_string(const std::string& s) {
  if (s == "none") return RejectReason::kNone;
  if (s == "blurry") return RejectReason::kBlurry;
  if (s == "dark_or_desaturated") return RejectReason::kDarkOrDesaturated;
  throw FormatError("unknown reject reason: " + s);
}

double laplacian_variance(const std::vector<double>& luma, int width, int height) {
  if (width < 1 || height < 1 || luma.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("laplacian_variance: empty or mis-sized plane");
  }
  const auto& k = kernels::active();
  const std::size_t w = static_cast<std::size_t>(width);
  // Three padded rows rotate through the image; borders replicate.
  std::vector<double> pad(3 * (w + 2));
  auto fill_row = [&](int y, double* dst) {
    const double* src = luma.data() + static_cast<std::size_t>(std::clamp(y, 0, height - 1)) * w;
    dst[0] = src[0];
    std::copy(src, src + w, dst + 1);
    dst[w + 1] = src[w - 1];
  };
  std::vector<double> response(luma.size());
  double* rows[3] = {pad.data(), pad.data() + (w + 2), pad.data() + 2 * (w + 2)};
  fill_row(-1, rows[0]);
  fill_row(0, rows[1]);
  for (int y = 0; y < height; ++y) {
    fill_row(y + 1, rows[2]);
    k.laplacian_row_f64(rows[0], rows[1], rows[2], response.data() + static_cast<std::size_t>(y) * w, w);
    std::rotate(rows, rows + 1, rows + 3);
  }
  const double n = static_cast<double>(response.size());
  const double mean = k.sum_f64(response.data(), response.size()) / n;
  return k.sum_sq_dev_f64(response.data(), mean, response.size()) / n;
}

double laplacian_variance(const RasterImage& image) {
  if (image.empty()) throw InvalidArgument("laplacian_variance: empty image");
  return laplacian_variance(luminance(image), image.width(), image.height());
}

QualityVerdict quality_gate(const RasterImage& image, const QualityGateConfig& config) {
  if (image.channels() != 3) {
    throw InvalidArgument("quality_gate: saturation is undefined for a single-channel image");
  }
  QualityVerdict v;
  v.blur_score = laplacian_variance(image);
  const RasterImage hsv = rgb_to_hsv(image);
  const int gate_channel = config.channel == SaturationChannel::kSaturation ? 1 : 0;
  double sat = 0.0, val = 0.0;
  auto d = hsv.data();
  for (std::size_t i = 0; i < hsv.pixel_count(); ++i) {
    sat += d[3 * i + gate_channel];
    val += d[3 * i + 2];
  }
  const double n = static_cast<double>(hsv.pixel_count());
  v.mean_sat = sat / n;
  v.mean_val = val / n;
  if (!(v.blur_score > config.blur_threshold)) {
    v.reason = RejectReason::kBlurry;
  } else if (v.mean_sat < config.sv_threshold || v.mean_val < config.sv_threshold) {
    v.reason = RejectReason::kDarkOrDesaturated;
  }
  v.accepted = v.reason == RejectReason::kNone;
  return v;
}

RasterImage gaussian_blur(const RasterImage& image, double sigma) {
  if (sigma < 0.0) throw InvalidArgument("gaussian_blur: negative sigma");
  if (sigma == 0.0) return image;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& v : kernel) v /= total;

  const int w = image.width(), h = image.height(), c = image.channels();
  std::vector<double> tmp(static_cast<std::size_t>(w) * h * c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          s += kernel[i + radius] * image.at(std::clamp(x + i, 0, w - 1), y, ch);
        }
        tmp[(static_cast<std::size_t>(y) * w + x) * c + ch] = s;
      }
    }
  }
  RasterImage out(w, h, c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          s += kernel[i + radius] * tmp[(static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x) * c + ch];
        }
        out.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(s), 0L, 255L));
      }
    }
  }
  return out;
}

}  // namespace proxyforge
