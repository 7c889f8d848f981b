#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "proxyforge/core.hpp"

namespace proxyforge {

/// Decodes PNG (any bit depth / color type) and binary or ASCII PGM/PPM.
/// 16-bit samples are rescaled to [0, 255]; alpha is dropped; palettes are
/// expanded to RGB.
RasterImage load_raster(const std::filesystem::path& path);

void save_png(const RasterImage& image, const std::filesystem::path& path);
void save_pnm(const RasterImage& image, const std::filesystem::path& path);

/// Raw 16-bit single-channel PNG, used for region id maps.
struct Gray16Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> data;
};
void save_png_gray16(const Gray16Image& image, const std::filesystem::path& path);
Gray16Image load_png_gray16(const std::filesystem::path& path);

/// Palette-indexed 8-bit PNG. The palette is written as given; reading
/// returns the raw indices without palette expansion.
struct IndexedImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> indices;
};
void save_png_indexed(const IndexedImage& image, std::span<const std::uint8_t> palette_rgb,
                      const std::filesystem::path& path);
IndexedImage load_png_indexed(const std::filesystem::path& path);

/// The 256-entry PASCAL VOC color map, RGB-interleaved.
std::vector<std::uint8_t> voc_palette();

}  // namespace proxyforge
