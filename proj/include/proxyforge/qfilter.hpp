#pragma once

#include <string>
#include <vector>

#include "proxyforge/core.hpp"

namespace proxyforge {

enum class RejectReason { kNone, kBlurry, kDarkOrDesaturated };

std::string to_string(RejectReason r);
RejectReason reject_reason_from_string(const std::string& s);

struct QualityVerdict {
  double blur_score = 0.0;  ///< variance of the Laplacian, intensity²
  double mean_sat = 0.0;    ///< [0, 255]
  double mean_val = 0.0;    ///< [0, 255]
  bool accepted = false;
  RejectReason reason = RejectReason::kNone;

  friend bool operator==(const QualityVerdict&, const QualityVerdict&) = default;
};

/// Which HSV channel the "saturation" gate reads. kHue is the literal
/// reading of the original wording and exists only for comparison runs.
enum class SaturationChannel { kSaturation, kHue };

struct QualityGateConfig {
  double blur_threshold = 50.0;
  double sv_threshold = 20.0;
  SaturationChannel channel = SaturationChannel::kSaturation;
};

/// Population variance of the 5-point Laplacian of BT.601 luma on the
/// [0, 255] scale, replicate borders.
double laplacian_variance(const RasterImage& image);
/// Same on an already-computed luma plane.
double laplacian_variance(const std::vector<double>& luma, int width, int height);

/// accepted ⇔ blur_score > blur_threshold ∧ mean_sat ≥ sv_threshold ∧
/// mean_val ≥ sv_threshold. Blur is checked first for the reason field.
QualityVerdict quality_gate(const RasterImage& image, const QualityGateConfig& config = {});

/// Separable Gaussian blur with replicate borders; sigma 0 is the identity.
/// Output is rounded back to 8 bits.
RasterImage gaussian_blur(const RasterImage& image, double sigma);

}  // namespace proxyforge
