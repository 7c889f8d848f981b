#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "proxyforge/core.hpp"
#include "proxyforge/regions.hpp"

namespace proxyforge {

/// Proxy ground truth for one (image, keyword) pair: per-pixel foreground
/// probability, the supervised category, and the ignore mask.
struct HeuristicMap {
  int width = 0;
  int height = 0;
  std::vector<double> fg_prob;
  int category = 0;
  std::vector<std::uint8_t> ignore;  ///< 1 ⇒ pixel carries the ignore label

  std::size_t pixel_count() const noexcept { return fg_prob.size(); }
  friend bool operator==(const HeuristicMap&, const HeuristicMap&) = default;
};

/// Elementwise maximum of two cue maps. Throws InvalidArgument when the
/// dimensions differ.
ProbabilityMap fuse_max(const ProbabilityMap& saliency, const ProbabilityMap& attention);

/// Broadcasts each region's mean saliency to all of its pixels.
HeuristicMap snap(const ProbabilityMap& saliency, const RegionMap& regions, int category);

/// Bilinear resampling with pixel-center alignment.
ProbabilityMap resize_bilinear(const ProbabilityMap& map, int width, int height);

/// Loads an 8-bit grayscale cue map and scales it to [0, 1]. RGB inputs
/// are reduced to luma.
ProbabilityMap load_probability_map(const std::filesystem::path& path);
void save_probability_map(const ProbabilityMap& map, const std::filesystem::path& path);

/// 8-bit PNG of round(fg_prob·255) plus "<stem>.json" with the category and
/// a run-length encoding of the ignore mask ([start, length] pairs).
void save_heuristic_map(const HeuristicMap& map, const std::filesystem::path& png_path);
HeuristicMap load_heuristic_map(const std::filesystem::path& png_path);

}  // namespace proxyforge
