#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "proxyforge/core.hpp"

namespace proxyforge {

/// Raw per-pixel class scores, background first. data[p * channels + c].
struct ScoreMap {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  ScoreMap() = default;
  ScoreMap(int w, int h, int c, double fill = 0.0);
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
  double* pixel(std::size_t p) { return data.data() + p * channels; }
  const double* pixel(std::size_t p) const { return data.data() + p * channels; }
  friend bool operator==(const ScoreMap&, const ScoreMap&) = default;
};

/// Same layout as ScoreMap; every pixel holds a distribution over the
/// allowed labels and exact zeros elsewhere.
using ClassProbMap = ScoreMap;

/// Per-pixel label id in {0..L} or CategoryTable::kIgnoreId.
struct SegmentationMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;

  SegmentationMask() = default;
  SegmentationMask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}
  std::size_t pixel_count() const noexcept { return labels.size(); }
  friend bool operator==(const SegmentationMask&, const SegmentationMask&) = default;
};

/// "PFSM", u32 header length, JSON {width, height, channels, labels}, then
/// float32 little-endian scores in pixel-major order.
void save_score_map(const ScoreMap& scores, const std::vector<std::string>& label_names,
                    const std::filesystem::path& path);
ScoreMap load_score_map(const std::filesystem::path& path, std::vector<std::string>* label_names = nullptr);

/// VOC-palette indexed PNG.
void save_mask(const SegmentationMask& mask, const std::filesystem::path& path);
SegmentationMask load_mask(const std::filesystem::path& path);

}  // namespace proxyforge
