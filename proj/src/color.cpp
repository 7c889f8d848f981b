#include "proxyforge/color.hpp"

#include <algorithm>
#include <cmath>

namespace proxyforge {

Hsv rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0.0 ? delta / mx : 0.0;
  if (delta <= 0.0) return out;
  double h;
  if (mx == r) {
    h = 60.0 * std::fmod((g - b) / delta, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / delta + 2.0);
  } else {
    h = 60.0 * ((r - g) / delta + 4.0);
  }
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

void hsv_to_rgb(const Hsv& hsv, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b) {
  const double c = hsv.v * hsv.s;
  double hp = hsv.h / 60.0;
  hp = std::fmod(hp, 6.0);
  if (hp < 0.0) hp += 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(hp)) {
    case 0: r1 = c; g1 = x; break;
    case 1: r1 = x; g1 = c; break;
    case 2: g1 = c; b1 = x; break;
    case 3: g1 = x; b1 = c; break;
    case 4: r1 = x; b1 = c; break;
    default: r1 = c; b1 = x; break;
  }
  const double m = hsv.v - c;
  auto q = [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
  };
  r = q(r1 + m);
  g = q(g1 + m);
  b = q(b1 + m);
}

RasterImage rgb_to_hsv(const RasterImage& image) {
  if (image.channels() != 3) {
    throw InvalidArgument("rgb_to_hsv requires a 3-channel image");
  }
  RasterImage out(image.width(), image.height(), 3);
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    const Hsv hsv = rgb_to_hsv(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
    dst[3 * i] = static_cast<std::uint8_t>(std::min(255L, std::lround(hsv.h * 255.0 / 360.0)));
    dst[3 * i + 1] = static_cast<std::uint8_t>(std::lround(hsv.s * 255.0));
    dst[3 * i + 2] = static_cast<std::uint8_t>(std::lround(hsv.v * 255.0));
  }
  return out;
}

RasterImage hsv_to_rgb(const RasterImage& hsv) {
  if (hsv.channels() != 3) throw InvalidArgument("hsv_to_rgb requires a 3-channel image");
  RasterImage out(hsv.width(), hsv.height(), 3);
  auto src = hsv.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < hsv.pixel_count(); ++i) {
    const Hsv p{src[3 * i] * 360.0 / 255.0, src[3 * i + 1] / 255.0, src[3 * i + 2] / 255.0};
    hsv_to_rgb(p, dst[3 * i], dst[3 * i + 1], dst[3 * i + 2]);
  }
  return out;
}

std::vector<double> luminance(const RasterImage& image) {
  std::vector<double> out(image.pixel_count());
  auto src = image.data();
  if (image.channels() == 1) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i];
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
  }
  return out;
}

int pixel_bin(const RasterImage& image, std::size_t index, int bins_per_channel) {
  auto d = image.data();
  if (image.channels() == 1) {
    const auto v = d[index];
    return histogram_bin(v, v, v, bins_per_channel);
  }
  return histogram_bin(d[3 * index], d[3 * index + 1], d[3 * index + 2], bins_per_channel);
}

ColorHistogram color_histogram(const RasterImage& image, std::span<const std::size_t> mask,
                               int bins_per_channel) {
  if (mask.empty()) throw InvalidArgument("color_histogram: empty mask");
  if (bins_per_channel < 2 || bins_per_channel > 256) {
    throw InvalidArgument("color_histogram: bins_per_channel must be in [2, 256]");
  }
  ColorHistogram h;
  h.bins_per_channel = bins_per_channel;
  h.bins.assign(static_cast<std::size_t>(bins_per_channel) * bins_per_channel * bins_per_channel,
                0.0);
  for (std::size_t idx : mask) {
    if (idx >= image.pixel_count()) throw InvalidArgument("color_histogram: mask index out of range");
    h.bins[static_cast<std::size_t>(pixel_bin(image, idx, bins_per_channel))] += 1.0;
  }
  const double inv = 1.0 / static_cast<double>(mask.size());
  for (double& v : h.bins) v *= inv;
  return h;
}

}  // namespace proxyforge
