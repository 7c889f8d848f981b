#include "proxyforge/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace proxyforge {

namespace {

void check_dims(int width, int height) {
  if (width < 1 || height < 1) {
    throw InvalidArgument("raster dimensions must be positive, got " + std::to_string(width) +
                          "x" + std::to_string(height));
  }
}

}  // namespace

RasterImage::RasterImage(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
  check_dims(width, height);
  if (channels != 1 && channels != 3) {
    throw InvalidArgument("raster channels must be 1 or 3, got " + std::to_string(channels));
  }
  data_.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

RasterImage::RasterImage(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  check_dims(width, height);
  if (channels != 1 && channels != 3) {
    throw InvalidArgument("raster channels must be 1 or 3, got " + std::to_string(channels));
  }
  if (data_.size() != pixel_count() * static_cast<std::size_t>(channels)) {
    throw InvalidArgument("raster data length does not match width*height*channels");
  }
}

ProbabilityMap::ProbabilityMap(int width, int height, double fill)
    : width_(width), height_(height) {
  check_dims(width, height);
  if (!(fill >= 0.0 && fill <= 1.0)) throw InvalidArgument("probability fill outside [0,1]");
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

ProbabilityMap::ProbabilityMap(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_dims(width, height);
  if (data_.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("probability map data length does not match width*height");
  }
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvalidArgument("probability map value outside [0,1]: " + std::to_string(v));
    }
  }
}

CategoryTable::CategoryTable(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw InvalidArgument("category table needs at least one category");
  if (static_cast<int>(names_.size()) >= kIgnoreId) {
    throw InvalidArgument("category table too large for the 8-bit ignore sentinel");
  }
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw InvalidArgument("category names must be nonempty");
    if (!seen.insert(n).second) throw InvalidArgument("duplicate category name: " + n);
  }
}

CategoryTable CategoryTable::voc() {
  return CategoryTable({"plane", "bike", "bird", "boat", "bottle", "bus", "car",
                        "cat", "chair", "cow", "table", "dog", "horse", "motor",
                        "person", "plant", "sheep", "sofa", "train", "tv"});
}

const std::string& CategoryTable::name_of(int id) const {
  static const std::string kBackground = "bkg";
  if (id == kBackgroundId) return kBackground;
  if (id < 1 || id > size()) throw InvalidArgument("unknown category id " + std::to_string(id));
  return names_[static_cast<std::size_t>(id - 1)];
}

int CategoryTable::id_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw InvalidArgument("unknown category name: " + name);
  return static_cast<int>(it - names_.begin()) + 1;
}

bool CategoryTable::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

LabelSet::LabelSet(std::vector<int> ids, const CategoryTable& table) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  for (int id : ids_) {
    if (id < 1 || id > table.size()) {
      throw InvalidArgument("label set id " + std::to_string(id) + " outside 1.." +
                            std::to_string(table.size()));
    }
  }
}

bool LabelSet::contains(int id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

std::vector<int> LabelSet::with_background() const {
  std::vector<int> out;
  out.reserve(ids_.size() + 1);
  out.push_back(CategoryTable::kBackgroundId);
  out.insert(out.end(), ids_.begin(), ids_.end());
  return out;
}

}  // namespace proxyforge
