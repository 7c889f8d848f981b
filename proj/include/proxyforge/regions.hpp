#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "proxyforge/core.hpp"

namespace proxyforge {

/// Partition of the image into 4-connected regions with contiguous ids.
class RegionMap {
 public:
  RegionMap() = default;
  /// Relabels `labels` to contiguous ids in raster order of first
  /// appearance. Throws InvalidArgument when a label is not 4-connected.
  static RegionMap from_labels(int width, int height, const std::vector<int>& labels);
  /// Takes ids as given; they must already be contiguous, in raster order of
  /// first appearance, and 4-connected.
  static RegionMap from_canonical_ids(int width, int height, std::vector<int> ids);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return ids_.size(); }
  int region_count() const noexcept { return static_cast<int>(sizes_.size()); }

  int id(std::size_t pixel) const { return ids_[pixel]; }
  int id(int x, int y) const { return ids_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::vector<int>& ids() const noexcept { return ids_; }
  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  /// Sorted (a, b) pairs with a < b.
  const std::vector<std::pair<int, int>>& adjacency() const noexcept { return adjacency_; }

  /// Pixel indices of every region, in raster order.
  std::vector<std::vector<std::size_t>> members() const;

  friend bool operator==(const RegionMap&, const RegionMap&) = default;

 private:
  void finalize(bool check_connectivity);

  int width_ = 0;
  int height_ = 0;
  std::vector<int> ids_;
  std::vector<std::size_t> sizes_;
  std::vector<std::pair<int, int>> adjacency_;
};

/// How a boundary between two regions is scored. Each 4-neighbor pixel pair
/// that straddles the boundary contributes max(edge_p, edge_q).
enum class BoundaryStatistic { kMean, kMax, kMedian };

struct MergeStep {
  int region_a = 0;  ///< representative (smallest base id) of one side
  int region_b = 0;
  double strength = 0.0;
};

struct UcmHierarchy {
  RegionMap base;
  /// Non-decreasing in strength.
  std::vector<MergeStep> merge_tree;
};

/// Finest partition: priority-flood watershed of the edge surface quantized
/// to 1/255, seeded at every regional minimum. Every pixel is assigned to a
/// basin, so there are no watershed-line pixels.
RegionMap watershed_oversegment(const ProbabilityMap& edges);

/// Greedy agglomeration by ascending boundary strength; ties broken by the
/// smaller (a, b) id pair. A merge never records a strength below the
/// previous merge, which keeps the hierarchy ultrametric.
UcmHierarchy build_ucm(const RegionMap& base, const ProbabilityMap& edges,
                       BoundaryStatistic statistic = BoundaryStatistic::kMean);

/// Applies every merge with strength <= threshold.
RegionMap cut_hierarchy(const UcmHierarchy& hierarchy, double threshold);

/// 16-bit id PNG plus "<stem>.json" sidecar {M, sizes, adjacency}.
void save_region_map(const RegionMap& regions, const std::filesystem::path& png_path);
RegionMap load_region_map(const std::filesystem::path& png_path);

}  // namespace proxyforge
