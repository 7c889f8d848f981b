#pragma once

// Stand-in for the external segmentation learner: per-pixel softmax
// regression on the joint color bin, trained with the heuristic-map loss.
// Score maps from a real learner can replace its output.

#include <span>
#include <vector>

#include "proxyforge/core.hpp"
#include "proxyforge/cues.hpp"
#include "proxyforge/label_maps.hpp"

namespace proxyforge {

struct SsmModel {
  int bins_per_channel = 8;
  int channels = 0;
  std::vector<double> weights;  ///< weights[bin * channels + c]
  std::vector<double> bias;     ///< per channel

  static SsmModel zeros(int bins_per_channel, int channels);
  friend bool operator==(const SsmModel&, const SsmModel&) = default;
};

struct SsmConfig {
  int iterations = 400;
  double learning_rate = 0.05;  ///< Adam step size
  double l2 = 1e-4;
  int bins_per_channel = 8;
};

/// Mean over non-ignored pixels of the heuristic loss, plus (l2/2)|W|².
/// Computed by summing heuristic_loss over every image.
double ssm_objective(const SsmModel& model, std::span<const RasterImage> images,
                     std::span<const HeuristicMap> heuristics, double l2, SsmModel* grad);

/// Per-bin pixel counts and summed targets over non-ignored pixels. The
/// loss depends on a pixel only through its bin and target, so these are
/// sufficient for training.
struct SsmStatistics {
  int bins_per_channel = 8;
  int channels = 0;
  std::vector<double> counts;   ///< per bin
  std::vector<double> targets;  ///< targets[bin * channels + c]
  double total = 0.0;
};

SsmStatistics collect_ssm_statistics(std::span<const RasterImage> images, std::span<const HeuristicMap> heuristics,
                                     int bins_per_channel, int channels);

/// Same value and gradient as the image-level objective.
double ssm_objective(const SsmModel& model, const SsmStatistics& stats, double l2, SsmModel* grad);

SsmModel fit_ssm(std::span<const RasterImage> images, std::span<const HeuristicMap> heuristics, int channels,
                 const SsmConfig& config = {});

ScoreMap ssm_predict(const SsmModel& model, const RasterImage& image);

void save_ssm_model(const SsmModel& model, const std::filesystem::path& path);
SsmModel load_ssm_model(const std::filesystem::path& path);

}  // namespace proxyforge
