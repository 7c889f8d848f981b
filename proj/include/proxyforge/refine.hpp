#pragma once

// Training-target utilities: the masked cross-entropy against heuristic
// maps, and label-restricted refinement of learner score maps.

#include <optional>
#include <string>
#include <vector>

#include "proxyforge/crf.hpp"
#include "proxyforge/cues.hpp"
#include "proxyforge/label_maps.hpp"
#include "proxyforge/nfm.hpp"

namespace proxyforge {

struct LossAndGradient {
  double loss = 0.0;
  ScoreMap grad;
};

/// −Σ_n [(1 − H_n) log p_n(l_0) + H_n log p_n(c)] over non-ignored pixels,
/// p_n = softmax(scores_n), c = heuristic.category. The gradient is p − t
/// per pixel and exactly zero at ignored pixels.
LossAndGradient heuristic_loss(const ScoreMap& scores, const HeuristicMap& heuristic);

/// A round-1 target as a label mask: the category where fg_prob > 0.5,
/// background elsewhere, the ignore label where ignored.
SegmentationMask targets_to_mask(const HeuristicMap& heuristic);

/// Per-pixel softmax over all channels, zeroed outside `allowed` and
/// renormalized. Channels outside `allowed` are exactly 0.
ClassProbMap restricted_softmax(const ScoreMap& scores, const std::vector<int>& allowed);

struct RefineConfig {
  CrfParams crf;
  MeanFieldConfig mean_field;
};

/// Allowed labels are y ∪ {l_0}. With crf.lambda == 0 the CRF is skipped
/// and T is the per-pixel argmax of the restricted distribution; otherwise
/// the region CRF runs on it and each region takes its marginal argmax.
/// Ties go to the smaller label id.
SegmentationMask refine_labels(const ScoreMap& scores, const LabelSet& y, const RasterImage& image,
                               const RegionMap& regions, const RefineConfig& config = {});

/// One image's inputs for a refinement round. Round 1 reads `heuristic`
/// (plus `edges` when the NFM runs); round 2 reads `scores`.
struct RoundItem {
  std::string id;
  RasterImage image;
  RegionMap regions;
  LabelSet y;
  std::optional<HeuristicMap> heuristic;
  std::optional<ProbabilityMap> edges;
  std::optional<ScoreMap> scores;
};

struct RoundResult {
  std::vector<HeuristicMap> heuristics;  ///< round 1
  std::vector<SegmentationMask> masks;   ///< round 2
};

/// Round 1 filters each heuristic map with the NFM (or passes it through
/// when disabled); round 2 refines score maps. The NFM is never used in
/// round 2: asking for it raises ContractViolation.
RoundResult run_round(const std::vector<RoundItem>& items, int round, bool nfm_enabled,
                      const MlpParameters* nfm_params, const RefineConfig& config = {},
                      int bins_per_channel = 8);

}  // namespace proxyforge
