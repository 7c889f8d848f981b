#pragma once

// Online noise filtering: a region classifier whose disagreement with the
// image labels marks regions as ignored.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "proxyforge/core.hpp"
#include "proxyforge/cues.hpp"
#include "proxyforge/regions.hpp"

namespace proxyforge {

/// Default foreground threshold on a region's summed fg_prob.
inline constexpr double kForegroundEpsilon = 1e-6;

/// Per-region descriptor: normalized B³ color histogram, normalized centroid
/// (x, y), area fraction, mean fg_prob, mean edge strength on the region
/// boundary.
using RegionFeatures = std::vector<double>;

constexpr std::size_t region_feature_dim(int bins_per_channel) {
  return static_cast<std::size_t>(bins_per_channel) * bins_per_channel * bins_per_channel + 5;
}

std::vector<RegionFeatures> extract_region_features(const RasterImage& image, const RegionMap& regions,
                                                    const HeuristicMap& heuristic,
                                                    const ProbabilityMap& edges, int bins_per_channel = 8);

/// input → hidden (ReLU) → num_classes. w1 is stored input-major
/// (w1[i * hidden + j]); w2 is class-major (w2[c * hidden + j]).
struct MlpParameters {
  int input_dim = 0;
  int hidden_dim = 0;
  int num_classes = 0;
  std::vector<double> w1, b1, w2, b2;
  std::uint64_t seed = 0;
  std::uint64_t step_count = 0;

  /// He-normal hidden weights, scaled-normal output weights, zero biases.
  static MlpParameters initialize(int input_dim, int hidden_dim, int num_classes, std::uint64_t seed);
  static MlpParameters zeros(int input_dim, int hidden_dim, int num_classes);

  friend bool operator==(const MlpParameters&, const MlpParameters&) = default;
};

struct RegionPrediction {
  std::vector<double> scores;  ///< f^m, one per category l_1..l_L
  int label = 0;               ///< argmax category id in 1..L, ties to the smallest
};

RegionPrediction mlp_forward(const MlpParameters& params, std::span<const double> features);

struct LabeledRegion {
  std::span<const double> features;
  int label = 0;  ///< category id in 1..L
};

struct LrMultipliers {
  double hidden = 0.1;
  double output = 0.01;
};

struct SgdConfig {
  double base_lr = 0.1;
  LrMultipliers multipliers;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// Velocity buffers, owned by the caller across steps.
struct MomentumState {
  std::vector<double> w1, b1, w2, b2;
  static MomentumState for_params(const MlpParameters& params);
};

/// Mean softmax cross-entropy over the batch. When `grad` is non-null it is
/// resized and filled with ∂loss/∂params (no weight decay term).
double nfm_loss_and_gradient(const MlpParameters& params, std::span<const LabeledRegion> batch,
                             MlpParameters* grad);

/// One momentum-SGD step in place; effective LR per layer is base_lr times
/// its multiplier. Returns the pre-step batch loss. Throws InvalidArgument
/// on an empty batch and NumericError (leaving params untouched) when the
/// loss is not finite.
double nfm_train_step(MlpParameters& params, MomentumState& state, std::span<const LabeledRegion> batch,
                      const SgdConfig& config);

/// Regions whose summed fg_prob exceeds epsilon are labeled with the map's
/// category; the rest get CategoryTable::kIgnoreId.
std::vector<std::pair<int, int>> label_regions_for_training(const HeuristicMap& heuristic,
                                                            const RegionMap& regions, const LabelSet& y,
                                                            double epsilon = kForegroundEpsilon);

/// Sets ignore on every foreground region whose prediction falls outside y.
/// `predictions` is indexed by region id; background regions may be empty.
/// Throws ContractViolation when a foreground region lacks a prediction.
HeuristicMap filter_noise(const HeuristicMap& heuristic, const RegionMap& regions,
                          std::span<const std::optional<RegionPrediction>> predictions, const LabelSet& y,
                          double epsilon = kForegroundEpsilon);

/// Training examples of one image: all of its regions' features plus the
/// label from label_regions_for_training.
struct NfmImage {
  std::vector<RegionFeatures> features;
  std::vector<int> labels;
};

struct NfmTrainConfig {
  int hidden_dim = 1024;
  SgdConfig sgd;
  int max_epochs = 1;
  std::uint64_t seed = 0;
};

struct NfmTrainReport {
  std::vector<double> step_losses;
};

/// One mini-batch per image (its foreground regions), images visited in a
/// seed-determined order each epoch.
MlpParameters train_nfm(std::span<const NfmImage> images, int input_dim, int num_classes,
                        const NfmTrainConfig& config, NfmTrainReport* report = nullptr);

/// Flat little-endian binary: "PFNM", u32 header length, JSON header
/// {input_dim, hidden_dim, num_classes, seed, step_count}, then w1, b1, w2,
/// b2 as float64.
void save_mlp_parameters(const MlpParameters& params, const std::filesystem::path& path);
MlpParameters load_mlp_parameters(const std::filesystem::path& path);

}  // namespace proxyforge
