#pragma once

#include "proxyforge/core.hpp"
#include "proxyforge/cues.hpp"
#include "proxyforge/label_maps.hpp"

namespace proxyforge {

/// Labels 1..L are blended half and half with their VOC color, rounding
/// halves up; background is left as is; ignore pixels are solid red.
/// Single-channel images are expanded to gray RGB first.
RasterImage render_overlay(const RasterImage& image, const SegmentationMask& mask);

/// Category color blended with weight 0.5·fg_prob; ignored pixels solid red.
RasterImage render_overlay(const RasterImage& image, const HeuristicMap& heuristic);

}  // namespace proxyforge
