#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "proxyforge/core.hpp"

namespace proxyforge {

/// Unquantized HSV: hue in degrees [0, 360), saturation and value in [0, 1].
struct Hsv {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};

Hsv rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);
/// Rounds each channel to the nearest 8-bit value.
void hsv_to_rgb(const Hsv& hsv, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b);

/// 3-channel HSV image with every channel scaled to [0, 255]
/// (hue from [0, 360)). Throws InvalidArgument for single-channel input.
RasterImage rgb_to_hsv(const RasterImage& image);
/// Inverse of the 8-bit conversion. Hue quantization to 256 levels bounds
/// the round-trip error by about 3 levels on fully saturated colors.
RasterImage hsv_to_rgb(const RasterImage& hsv);

/// ITU-R BT.601 luma, unrounded.
std::vector<double> luminance(const RasterImage& image);

inline int histogram_bin(std::uint8_t r, std::uint8_t g, std::uint8_t b, int bins_per_channel) {
  const int rb = r * bins_per_channel / 256;
  const int gb = g * bins_per_channel / 256;
  const int bb = b * bins_per_channel / 256;
  return (rb * bins_per_channel + gb) * bins_per_channel + bb;
}

/// Bin of pixel `index`. Single-channel images are binned as gray (r=g=b).
int pixel_bin(const RasterImage& image, std::size_t index, int bins_per_channel);

/// Normalized histogram over the masked pixel indices.
ColorHistogram color_histogram(const RasterImage& image, std::span<const std::size_t> mask,
                               int bins_per_channel = 8);

}  // namespace proxyforge
