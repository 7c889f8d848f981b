#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "proxyforge/error.hpp"

namespace proxyforge {

/// 8-bit raster, row-major, (0,0) top-left, channels interleaved.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, int channels, std::uint8_t fill = 0);
  RasterImage(int width, int height, int channels, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const noexcept { return data_.empty(); }

  std::uint8_t at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  std::uint8_t& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Scalar map with values in [0, 1] (saliency, attention, edge strength).
class ProbabilityMap {
 public:
  ProbabilityMap() = default;
  ProbabilityMap(int width, int height, double fill = 0.0);
  /// Throws InvalidArgument if any value leaves [0, 1] or the size is wrong.
  ProbabilityMap(int width, int height, std::vector<double> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  /// Writers must keep values in [0, 1].
  double& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  friend bool operator==(const ProbabilityMap&, const ProbabilityMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Ordered category names l_1..l_L. Id 0 is background, kIgnoreId marks
/// pixels excluded from every loss and from evaluation.
class CategoryTable {
 public:
  static constexpr int kBackgroundId = 0;
  static constexpr int kIgnoreId = 255;

  CategoryTable() = default;
  explicit CategoryTable(std::vector<std::string> names);

  /// The 20 PASCAL VOC categories with their short report names.
  static CategoryTable voc();

  int size() const noexcept { return static_cast<int>(names_.size()); }
  int num_labels() const noexcept { return size() + 1; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  /// Background maps to "bkg".
  const std::string& name_of(int id) const;
  /// Throws InvalidArgument for unknown names.
  int id_of(const std::string& name) const;
  bool contains(const std::string& name) const;

 private:
  std::vector<std::string> names_;
};

/// Image-level labels y: sorted, unique ids drawn from {1..L}.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::vector<int> ids, const CategoryTable& table);

  const std::vector<int>& ids() const noexcept { return ids_; }
  bool contains(int id) const;
  bool empty() const noexcept { return ids_.empty(); }

  /// y ∪ {l_0}, sorted.
  std::vector<int> with_background() const;

 private:
  std::vector<int> ids_;
};

/// Joint RGB histogram with B bins per channel (B³ bins total).
struct ColorHistogram {
  int bins_per_channel = 0;
  std::vector<double> bins;
};

}  // namespace proxyforge
