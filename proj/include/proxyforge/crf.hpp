#pragma once

// Region-level CRF: unaries from pooled class probabilities, Potts pairwise
// terms weighted by color-histogram similarity, mean-field inference.

#include <vector>

#include "proxyforge/core.hpp"
#include "proxyforge/label_maps.hpp"
#include "proxyforge/regions.hpp"

namespace proxyforge {

struct RegionGraph {
  struct Edge {
    int u = 0;
    int v = 0;
    double weight = 0.0;
  };
  std::vector<int> labels;        ///< allowed label ids, ascending; node state k means labels[k]
  int node_count = 0;
  std::vector<double> unaries;    ///< unaries[u * labels.size() + k]
  std::vector<Edge> edges;        ///< u < v, each adjacent pair once

  std::size_t label_count() const noexcept { return labels.size(); }
  double unary(int u, std::size_t k) const { return unaries[static_cast<std::size_t>(u) * labels.size() + k]; }
};

struct CrfParams {
  double lambda = 2.0;
  double beta = 0.0;  ///< <= 0 selects the mean χ² over all edges
  int bins_per_channel = 8;
};

inline constexpr double kUnaryFloor = 1e-8;

/// unary_u(l) = −log(max(mean_{p∈u} probs(l), 1e-8)),
/// w_uv = λ·exp(−χ²(hist_u, hist_v)/β).
RegionGraph build_region_graph(const ClassProbMap& probs, const RegionMap& regions, const RasterImage& image,
                               const std::vector<int>& allowed, const CrfParams& params = {});

struct MeanFieldConfig {
  int iterations = 10;
  /// Entropy weight T of the free energy. Lower values make the marginals
  /// sharper and the decoded labels closer to the MAP labeling.
  double temperature = 0.25;
  /// Also start from a near-one-hot state per label and keep the run with
  /// the lowest final free energy.
  bool multi_start = true;
};

struct MeanFieldState {
  std::vector<double> q;  ///< q[u * K + k]
  double free_energy = 0.0;
  /// Free energy of the initial state and after every sweep of the kept run.
  std::vector<double> sweep_energies;
};

/// F(q) = Σ_u Σ_k q_u(k)θ_u(k) + Σ_uv w_uv(1 − Σ_k q_u(k)q_v(k)) + T Σ_u Σ_k q_u(k) log q_u(k)
double mean_field_free_energy(const RegionGraph& graph, const std::vector<double>& q, double temperature);

/// Sequential coordinate updates in node order. iterations = 0 returns the
/// tempered softmax of the negated unaries.
MeanFieldState mean_field(const RegionGraph& graph, const MeanFieldConfig& config = {});

/// Region argmax of the marginals (ties to the smaller label id) broadcast
/// to pixels.
SegmentationMask decode(const MeanFieldState& state, const RegionGraph& graph, const RegionMap& regions);

}  // namespace proxyforge
