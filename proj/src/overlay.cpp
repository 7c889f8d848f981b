#include "proxyforge/overlay.hpp"

#include <cmath>

#include "proxyforge/image_io.hpp"

namespace proxyforge {

namespace {

RasterImage as_rgb(const RasterImage& image) {
  if (image.channels() == 3) return image;
  std::vector<std::uint8_t> rgb(image.pixel_count() * 3);
  const auto src = image.data();
  for (std::size_t p = 0; p < image.pixel_count(); ++p) rgb[p * 3] = rgb[p * 3 + 1] = rgb[p * 3 + 2] = src[p];
  return RasterImage(image.width(), image.height(), 3, std::move(rgb));
}

void paint_red(std::uint8_t* px) {
  px[0] = 255;
  px[1] = 0;
  px[2] = 0;
}

}  // namespace

RasterImage render_overlay(const RasterImage& image, const SegmentationMask& mask) {
  if (image.width() != mask.width || image.height() != mask.height) {
    throw InvalidArgument("render_overlay: image and mask sizes differ");
  }
  RasterImage out = as_rgb(image);
  const auto palette = voc_palette();
  auto data = out.data();
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
    const int l = mask.labels[p];
    std::uint8_t* px = data.data() + p * 3;
    if (l == CategoryTable::kIgnoreId) {
      paint_red(px);
    } else if (l != CategoryTable::kBackgroundId) {
      for (int c = 0; c < 3; ++c) px[c] = static_cast<std::uint8_t>((px[c] + palette[l * 3 + c] + 1) / 2);
    }
  }
  return out;
}

RasterImage render_overlay(const RasterImage& image, const HeuristicMap& heuristic) {
  if (image.width() != heuristic.width || image.height() != heuristic.height) {
    throw InvalidArgument("render_overlay: image and heuristic sizes differ");
  }
  if (heuristic.category < 0 || heuristic.category > 255) throw InvalidArgument("render_overlay: bad category");
  RasterImage out = as_rgb(image);
  const auto palette = voc_palette();
  const std::uint8_t* color = palette.data() + heuristic.category * 3;
  auto data = out.data();
  for (std::size_t p = 0; p < heuristic.pixel_count(); ++p) {
    std::uint8_t* px = data.data() + p * 3;
    if (heuristic.ignore[p]) {
      paint_red(px);
      continue;
    }
    const double a = 0.5 * heuristic.fg_prob[p];
    for (int c = 0; c < 3; ++c) px[c] = static_cast<std::uint8_t>(std::lround(px[c] * (1.0 - a) + color[c] * a));
  }
  return out;
}

}  // namespace proxyforge
