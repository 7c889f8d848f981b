#include "proxyforge/refine.hpp"

#include <algorithm>
#include <cmath>

namespace proxyforge {

namespace {

void softmax(const double* s, double* out, int n) {
  double mx = s[0];
  for (int c = 1; c < n; ++c) mx = std::max(mx, s[c]);
  double z = 0.0;
  for (int c = 0; c < n; ++c) {
    out[c] = std::exp(s[c] - mx);
    z += out[c];
  }
  for (int c = 0; c < n; ++c) out[c] /= z;
}

}  // namespace

LossAndGradient heuristic_loss(const ScoreMap& scores, const HeuristicMap& heuristic) {
  if (scores.width != heuristic.width || scores.height != heuristic.height) {
    throw InvalidArgument("heuristic_loss: score map and heuristic map sizes differ");
  }
  const int c = heuristic.category;
  if (c < 1 || c >= scores.channels) {
    throw InvalidArgument("heuristic_loss: category " + std::to_string(c) + " has no score channel");
  }
  LossAndGradient out{0.0, ScoreMap(scores.width, scores.height, scores.channels)};
  std::vector<double> p(static_cast<std::size_t>(scores.channels));
  for (std::size_t n = 0; n < scores.pixel_count(); ++n) {
    if (heuristic.ignore[n]) continue;
    const double* s = scores.pixel(n);
    double mx = s[0];
    for (int k = 1; k < scores.channels; ++k) mx = std::max(mx, s[k]);
    double z = 0.0;
    for (int k = 0; k < scores.channels; ++k) z += std::exp(s[k] - mx);
    const double log_z = mx + std::log(z);
    const double h = heuristic.fg_prob[n];
    out.loss -= (1.0 - h) * (s[0] - log_z) + h * (s[c] - log_z);

    double* g = out.grad.pixel(n);
    for (int k = 0; k < scores.channels; ++k) g[k] = std::exp(s[k] - log_z);
    g[0] -= 1.0 - h;
    g[c] -= h;
  }
  return out;
}

SegmentationMask targets_to_mask(const HeuristicMap& heuristic) {
  if (heuristic.category < 1 || heuristic.category >= CategoryTable::kIgnoreId) {
    throw InvalidArgument("targets_to_mask: bad category");
  }
  SegmentationMask m(heuristic.width, heuristic.height, CategoryTable::kBackgroundId);
  for (std::size_t p = 0; p < m.labels.size(); ++p) {
    if (heuristic.ignore[p]) m.labels[p] = CategoryTable::kIgnoreId;
    else if (heuristic.fg_prob[p] > 0.5) m.labels[p] = static_cast<std::uint8_t>(heuristic.category);
  }
  return m;
}

ClassProbMap restricted_softmax(const ScoreMap& scores, const std::vector<int>& allowed) {
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(scores.channels), 0);
  for (int l : allowed) {
    if (l < 0 || l >= scores.channels) throw InvalidArgument("restricted_softmax: label outside score channels");
    keep[static_cast<std::size_t>(l)] = 1;
  }
  ClassProbMap out(scores.width, scores.height, scores.channels);
  for (std::size_t n = 0; n < scores.pixel_count(); ++n) {
    double* t = out.pixel(n);
    softmax(scores.pixel(n), t, scores.channels);
    double z = 0.0;
    for (int k = 0; k < scores.channels; ++k) {
      if (!keep[static_cast<std::size_t>(k)]) t[k] = 0.0;
      z += t[k];
    }
    if (!(z > 0.0)) throw NumericError("restricted_softmax: partition function vanished");
    for (int k = 0; k < scores.channels; ++k) t[k] /= z;
  }
  return out;
}

SegmentationMask refine_labels(const ScoreMap& scores, const LabelSet& y, const RasterImage& image,
                               const RegionMap& regions, const RefineConfig& config) {
  if (scores.width != regions.width() || scores.height != regions.height() || image.width() != regions.width() ||
      image.height() != regions.height()) {
    throw InvalidArgument("refine_labels: inputs are not aligned");
  }
  const std::vector<int> allowed = y.with_background();
  const ClassProbMap t_hat = restricted_softmax(scores, allowed);

  if (config.crf.lambda == 0.0) {
    SegmentationMask mask(scores.width, scores.height);
    for (std::size_t n = 0; n < mask.pixel_count(); ++n) {
      const double* t = t_hat.pixel(n);
      int best = allowed.front();
      for (int l : allowed) {
        if (t[l] > t[best]) best = l;
      }
      mask.labels[n] = static_cast<std::uint8_t>(best);
    }
    return mask;
  }
  const RegionGraph graph = build_region_graph(t_hat, regions, image, allowed, config.crf);
  return decode(mean_field(graph, config.mean_field), graph, regions);
}

RoundResult run_round(const std::vector<RoundItem>& items, int round, bool nfm_enabled,
                      const MlpParameters* nfm_params, const RefineConfig& config, int bins_per_channel) {
  RoundResult out;
  if (round == 2) {
    if (nfm_enabled) throw ContractViolation("run_round: the noise filter is not used after round 1");
    out.masks.reserve(items.size());
    for (const auto& item : items) {
      if (!item.scores) throw MissingInput("run_round: round 2 needs a score map for " + item.id);
      out.masks.push_back(refine_labels(*item.scores, item.y, item.image, item.regions, config));
    }
    return out;
  }
  if (round != 1) throw InvalidArgument("run_round: round must be 1 or 2");
  if (nfm_enabled && !nfm_params) throw MissingInput("run_round: NFM enabled but no parameters given");
  out.heuristics.reserve(items.size());
  for (const auto& item : items) {
    if (!item.heuristic) throw MissingInput("run_round: round 1 needs a heuristic map for " + item.id);
    if (!nfm_enabled) {
      out.heuristics.push_back(*item.heuristic);
      continue;
    }
    if (!item.edges) throw MissingInput("run_round: NFM needs an edge map for " + item.id);
    const auto features =
        extract_region_features(item.image, item.regions, *item.heuristic, *item.edges, bins_per_channel);
    const auto labels = label_regions_for_training(*item.heuristic, item.regions, item.y);
    std::vector<std::optional<RegionPrediction>> preds(features.size());
    for (const auto& [r, label] : labels) {
      if (label != CategoryTable::kIgnoreId) preds[static_cast<std::size_t>(r)] = mlp_forward(*nfm_params, features[static_cast<std::size_t>(r)]);
    }
    out.heuristics.push_back(filter_noise(*item.heuristic, item.regions, preds, item.y));
  }
  return out;
}

}  // namespace proxyforge
