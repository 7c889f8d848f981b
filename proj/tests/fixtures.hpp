#pragma once

// Shared synthetic fixtures for the unit suites and the acceptance run.

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "proxyforge/color.hpp"
#include "proxyforge/nfm.hpp"
#include "support.hpp"

namespace pftest {

/// Region descriptors for a 3-category world whose classes differ only in
/// color: each region is a few hundred pixels of its class color with
/// ±jitter noise, plus random geometry and cue statistics.
struct ColorRegionWorld {
  static constexpr int kBins = 8;
  static constexpr std::array<std::array<int, 3>, 3> kColors{{{208, 48, 48}, {48, 176, 80}, {48, 80, 208}}};

  std::mt19937_64 rng;
  int jitter;

  explicit ColorRegionWorld(std::uint64_t seed, int jitter_ = 16) : rng(seed), jitter(jitter_) {}

  proxyforge::RegionFeatures region(int category) {
    const int n = uniform_int(rng, 100, 400);
    std::vector<std::uint8_t> px;
    const auto& c = kColors[static_cast<std::size_t>(category - 1)];
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < 3; ++ch) {
        px.push_back(static_cast<std::uint8_t>(std::clamp(c[ch] + uniform_int(rng, -jitter, jitter), 0, 255)));
      }
    }
    const proxyforge::RasterImage img(n, 1, 3, std::move(px));
    std::vector<std::size_t> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
    proxyforge::RegionFeatures f = proxyforge::color_histogram(img, all, kBins).bins;
    f.push_back(uniform(rng, 0, 1));     // centroid x
    f.push_back(uniform(rng, 0, 1));     // centroid y
    f.push_back(uniform(rng, 0.01, 0.2));  // area
    f.push_back(uniform(rng, 0.5, 1));   // mean fg_prob
    f.push_back(uniform(rng, 0, 1));     // boundary edge
    return f;
  }

  /// One image per entry: a single category with 2..6 regions.
  std::vector<proxyforge::NfmImage> images(int count) {
    std::vector<proxyforge::NfmImage> out;
    for (int i = 0; i < count; ++i) {
      const int cat = i % 3 + 1;
      proxyforge::NfmImage img;
      const int regions = uniform_int(rng, 2, 6);
      for (int r = 0; r < regions; ++r) {
        img.features.push_back(region(cat));
        img.labels.push_back(cat);
      }
      out.push_back(std::move(img));
    }
    return out;
  }
};

inline double region_accuracy(const proxyforge::MlpParameters& params, ColorRegionWorld& world, int per_class) {
  int hit = 0, total = 0;
  for (int cat = 1; cat <= 3; ++cat) {
    for (int i = 0; i < per_class; ++i) {
      const auto f = world.region(cat);
      hit += proxyforge::mlp_forward(params, f).label == cat;
      ++total;
    }
  }
  return static_cast<double>(hit) / total;
}

/// One epoch of nfm_train_step over `count` shuffled regions (classes in
/// equal shares) in mini-batches of `batch`, default SGD settings.
inline proxyforge::MlpParameters train_color_world(std::uint64_t seed, int count = 900, std::size_t batch = 8,
                                                   int hidden = 1024) {
  using namespace proxyforge;
  ColorRegionWorld world(seed);
  std::vector<RegionFeatures> feats;
  std::vector<int> labels;
  for (int i = 0; i < count; ++i) {
    feats.push_back(world.region(i % 3 + 1));
    labels.push_back(i % 3 + 1);
  }
  for (std::size_t i = feats.size(); i > 1; --i) {
    const std::size_t j = world.rng() % i;
    std::swap(feats[i - 1], feats[j]);
    std::swap(labels[i - 1], labels[j]);
  }
  MlpParameters p = MlpParameters::initialize(static_cast<int>(region_feature_dim(ColorRegionWorld::kBins)), hidden,
                                              3, seed);
  MomentumState state = MomentumState::for_params(p);
  for (std::size_t b = 0; b < feats.size(); b += batch) {
    std::vector<LabeledRegion> mb;
    for (std::size_t i = b; i < std::min(feats.size(), b + batch); ++i) mb.push_back({feats[i], labels[i]});
    nfm_train_step(p, state, mb, SgdConfig{});
  }
  return p;
}

/// 24×12 image in three vertical strips: gray background (fg 0), a
/// category-1 strip and a planted category-2 strip, both fg 1, supervised
/// as category 1.
struct PlantedFixture {
  proxyforge::RasterImage image{24, 12, 3};
  proxyforge::RegionMap regions;
  proxyforge::HeuristicMap heuristic;
  proxyforge::ProbabilityMap edges{24, 12};

  PlantedFixture() {
    std::mt19937_64 rng(99);
    std::vector<int> ids;
    heuristic.width = 24;
    heuristic.height = 12;
    heuristic.category = 1;
    for (int y = 0; y < 12; ++y) {
      for (int x = 0; x < 24; ++x) {
        const int strip = x / 8;
        ids.push_back(strip);
        for (int ch = 0; ch < 3; ++ch) {
          const int base = strip == 0 ? 128 : ColorRegionWorld::kColors[static_cast<std::size_t>(strip - 1)][ch];
          image.at(x, y, ch) = static_cast<std::uint8_t>(base + uniform_int(rng, -10, 10));
        }
        heuristic.fg_prob.push_back(strip == 0 ? 0.0 : 1.0);
      }
    }
    heuristic.ignore.assign(heuristic.fg_prob.size(), 0);
    regions = proxyforge::RegionMap::from_labels(24, 12, ids);
  }
};

inline proxyforge::RasterImage checkerboard(int w, int h, std::uint8_t lo, std::uint8_t hi) {
  proxyforge::RasterImage img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = ((x + y) % 2) ? hi : lo;
  return img;
}

/// Ten images for the blur ladder: noise, checkerboards, stripes and a ramp.
inline std::vector<proxyforge::RasterImage> blur_fixtures() {
  std::mt19937_64 rng(21);
  std::vector<proxyforge::RasterImage> out;
  for (int i = 0; i < 6; ++i) out.push_back(random_image(rng, 40 + 3 * i, 32, 3));
  out.push_back(checkerboard(32, 32, 0, 255));
  out.push_back(checkerboard(33, 17, 40, 200));
  proxyforge::RasterImage stripes(48, 48, 3);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x)
      for (int c = 0; c < 3; ++c) stripes.at(x, y, c) = (x / 3) % 2 ? 230 : 20;
  out.push_back(stripes);
  proxyforge::RasterImage ramp = random_image(rng, 50, 30, 3);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 50; ++x)
      for (int c = 0; c < 3; ++c) ramp.at(x, y, c) = static_cast<std::uint8_t>((ramp.at(x, y, c) / 8) + 4 * x);
  out.push_back(ramp);
  return out;
}

}  // namespace pftest
