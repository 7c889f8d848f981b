#pragma once

// Synthetic "web image" corpus with known masks: one colored blob per image
// on a textured grayish background, some images carrying a second blob colored
// like another category that the saliency cue also fires on.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "proxyforge/core.hpp"
#include "proxyforge/label_maps.hpp"

namespace proxyforge {

struct SynthCategory {
  std::string name;  ///< must exist in the category table
  std::array<std::uint8_t, 3> color;
};

struct SynthConfig {
  int count = 200;
  int min_size = 64;
  int max_size = 96;
  double distractor_fraction = 0.1;
  int color_jitter = 8;
  double saliency_falloff = 1.0;  ///< pixels
  std::uint64_t seed = 0;
  std::vector<SynthCategory> categories = {
      {"plane", {208, 48, 48}}, {"bike", {48, 176, 80}}, {"bird", {48, 80, 208}}, {"boat", {240, 208, 48}}};
};

struct SynthSample {
  std::string keyword;
  int category = 0;
  bool has_distractor = false;
  int distractor_category = 0;  ///< 0 when there is none
  RasterImage image;
  ProbabilityMap saliency;
  ProbabilityMap edges;
  SegmentationMask ground_truth;  ///< category on the blob, background elsewhere (distractor included)
};

/// Sample i depends only on (seed, i).
SynthSample generate_sample(const SynthConfig& config, const CategoryTable& table, int index);
std::vector<SynthSample> generate_synthetic(const SynthConfig& config, const CategoryTable& table);

}  // namespace proxyforge
