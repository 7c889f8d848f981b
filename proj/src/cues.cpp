#include "proxyforge/cues.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "proxyforge/color.hpp"
#include "proxyforge/image_io.hpp"
#include "proxyforge/kernels.hpp"

namespace proxyforge {

ProbabilityMap fuse_max(const ProbabilityMap& saliency, const ProbabilityMap& attention) {
  if (saliency.width() != attention.width() || saliency.height() != attention.height()) {
    throw InvalidArgument("fuse_max: cue maps have different dimensions");
  }
  ProbabilityMap out(saliency.width(), saliency.height());
  kernels::active().max_f64(saliency.data().data(), attention.data().data(), out.data().data(),
                            out.size());
  return out;
}

HeuristicMap snap(const ProbabilityMap& saliency, const RegionMap& regions, int category) {
  if (saliency.width() != regions.width() || saliency.height() != regions.height()) {
    throw InvalidArgument("snap: saliency and region map sizes differ");
  }
  std::vector<double> sums(static_cast<std::size_t>(regions.region_count()), 0.0);
  for (std::size_t p = 0; p < saliency.size(); ++p) sums[static_cast<std::size_t>(regions.id(p))] += saliency[p];
  const auto& sizes = regions.sizes();
  for (std::size_t r = 0; r < sums.size(); ++r) sums[r] /= static_cast<double>(sizes[r]);

  HeuristicMap h;
  h.width = saliency.width();
  h.height = saliency.height();
  h.category = category;
  h.fg_prob.resize(saliency.size());
  h.ignore.assign(saliency.size(), 0);
  for (std::size_t p = 0; p < saliency.size(); ++p) h.fg_prob[p] = sums[static_cast<std::size_t>(regions.id(p))];
  return h;
}

ProbabilityMap resize_bilinear(const ProbabilityMap& map, int width, int height) {
  if (width == map.width() && height == map.height()) return map;
  ProbabilityMap out(width, height);
  const double sx = static_cast<double>(map.width()) / width;
  const double sy = static_cast<double>(map.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, map.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, map.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, map.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, map.width() - 1);
      const double tx = fx - x0;
      const double top = map.at(x0, y0) * (1 - tx) + map.at(x1, y0) * tx;
      const double bot = map.at(x0, y1) * (1 - tx) + map.at(x1, y1) * tx;
      out.at(x, y) = std::clamp(top * (1 - ty) + bot * ty, 0.0, 1.0);
    }
  }
  return out;
}

ProbabilityMap load_probability_map(const std::filesystem::path& path) {
  const RasterImage img = load_raster(path);
  std::vector<double> values;
  if (img.channels() == 1) {
    values.assign(img.data().begin(), img.data().end());
  } else {
    values = luminance(img);
  }
  for (double& v : values) v = std::clamp(v / 255.0, 0.0, 1.0);
  return ProbabilityMap(img.width(), img.height(), std::move(values));
}

void save_probability_map(const ProbabilityMap& map, const std::filesystem::path& path) {
  RasterImage img(map.width(), map.height(), 1);
  auto d = img.data();
  for (std::size_t i = 0; i < map.size(); ++i) {
    d[i] = static_cast<std::uint8_t>(std::lround(map[i] * 255.0));
  }
  save_png(img, path);
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& png_path) {
  auto p = png_path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void save_heuristic_map(const HeuristicMap& map, const std::filesystem::path& png_path) {
  RasterImage img(map.width, map.height, 1);
  auto d = img.data();
  for (std::size_t i = 0; i < map.pixel_count(); ++i) {
    d[i] = static_cast<std::uint8_t>(std::lround(std::clamp(map.fg_prob[i], 0.0, 1.0) * 255.0));
  }
  save_png(img, png_path);

  auto runs = nlohmann::json::array();
  for (std::size_t i = 0; i < map.ignore.size();) {
    if (!map.ignore[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < map.ignore.size() && map.ignore[j]) ++j;
    runs.push_back({i, j - i});
    i = j;
  }
  nlohmann::json j;
  j["category"] = map.category;
  j["width"] = map.width;
  j["height"] = map.height;
  j["ignore_rle"] = std::move(runs);
  std::ofstream out(sidecar_path(png_path));
  if (!out) throw IoError("cannot write " + sidecar_path(png_path).string());
  out << j.dump() << '\n';
}

HeuristicMap load_heuristic_map(const std::filesystem::path& png_path) {
  const RasterImage img = load_raster(png_path);
  if (img.channels() != 1) throw FormatError(png_path.string() + ": heuristic map must be grayscale");
  const auto side = sidecar_path(png_path);
  std::ifstream in(side);
  if (!in) throw MissingInput("missing heuristic sidecar " + side.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(side.string() + ": " + e.what());
  }
  HeuristicMap h;
  h.width = img.width();
  h.height = img.height();
  h.category = j.at("category").get<int>();
  h.fg_prob.resize(img.pixel_count());
  for (std::size_t i = 0; i < img.pixel_count(); ++i) h.fg_prob[i] = img.data()[i] / 255.0;
  h.ignore.assign(img.pixel_count(), 0);
  for (const auto& run : j.at("ignore_rle")) {
    const auto start = run.at(0).get<std::size_t>();
    const auto len = run.at(1).get<std::size_t>();
    if (start + len > h.ignore.size()) throw FormatError(side.string() + ": ignore run out of range");
    std::fill_n(h.ignore.begin() + static_cast<std::ptrdiff_t>(start), len, 1);
  }
  return h;
}

}  // namespace proxyforge
