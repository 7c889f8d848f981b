#include "proxyforge/crf.hpp"

#include <algorithm>
#include <cmath>

#include "proxyforge/color.hpp"
#include "proxyforge/kernels.hpp"

namespace proxyforge {

RegionGraph build_region_graph(const ClassProbMap& probs, const RegionMap& regions, const RasterImage& image,
                               const std::vector<int>& allowed, const CrfParams& params) {
  if (probs.width != regions.width() || probs.height != regions.height() || image.width() != regions.width() ||
      image.height() != regions.height()) {
    throw InvalidArgument("build_region_graph: maps are not aligned");
  }
  if (allowed.empty() || !std::is_sorted(allowed.begin(), allowed.end()) ||
      std::adjacent_find(allowed.begin(), allowed.end()) != allowed.end()) {
    throw InvalidArgument("build_region_graph: allowed labels must be sorted and unique");
  }
  for (int l : allowed) {
    if (l < 0 || l >= probs.channels) throw InvalidArgument("build_region_graph: label outside score channels");
  }
  if (params.lambda < 0.0) throw InvalidArgument("build_region_graph: lambda must be nonnegative");

  RegionGraph g;
  g.labels = allowed;
  g.node_count = regions.region_count();
  const std::size_t k_count = allowed.size();
  const std::size_t m = static_cast<std::size_t>(g.node_count);

  std::vector<double> sums(m * k_count, 0.0);
  for (std::size_t p = 0; p < regions.pixel_count(); ++p) {
    const std::size_t r = static_cast<std::size_t>(regions.id(p));
    const double* pr = probs.pixel(p);
    for (std::size_t k = 0; k < k_count; ++k) sums[r * k_count + k] += pr[allowed[k]];
  }
  g.unaries.resize(m * k_count);
  for (std::size_t r = 0; r < m; ++r) {
    const double n = static_cast<double>(regions.sizes()[r]);
    for (std::size_t k = 0; k < k_count; ++k) {
      g.unaries[r * k_count + k] = -std::log(std::max(sums[r * k_count + k] / n, kUnaryFloor));
    }
  }

  const auto& adjacency = regions.adjacency();
  if (adjacency.empty()) return g;
  const auto members = regions.members();
  std::vector<ColorHistogram> hists;
  hists.reserve(m);
  for (const auto& px : members) hists.push_back(color_histogram(image, px, params.bins_per_channel));

  const auto& kern = kernels::active();
  std::vector<double> chi(adjacency.size());
  double chi_sum = 0.0;
  for (std::size_t e = 0; e < adjacency.size(); ++e) {
    const auto& a = hists[static_cast<std::size_t>(adjacency[e].first)].bins;
    const auto& b = hists[static_cast<std::size_t>(adjacency[e].second)].bins;
    chi[e] = kern.chi_square_f64(a.data(), b.data(), a.size());
    chi_sum += chi[e];
  }
  double beta = params.beta;
  if (beta <= 0.0) {
    beta = chi_sum / static_cast<double>(chi.size());
    if (!(beta > 0.0)) beta = 1.0;
  }
  g.edges.reserve(adjacency.size());
  for (std::size_t e = 0; e < adjacency.size(); ++e) {
    g.edges.push_back({adjacency[e].first, adjacency[e].second, params.lambda * std::exp(-chi[e] / beta)});
  }
  return g;
}

double mean_field_free_energy(const RegionGraph& g, const std::vector<double>& q, double temperature) {
  const std::size_t kc = g.label_count();
  double f = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    f += q[i] * g.unaries[i];
    if (q[i] > 0.0) f += temperature * q[i] * std::log(q[i]);
  }
  for (const auto& e : g.edges) {
    const double* qu = q.data() + static_cast<std::size_t>(e.u) * kc;
    const double* qv = q.data() + static_cast<std::size_t>(e.v) * kc;
    double agree = 0.0;
    for (std::size_t k = 0; k < kc; ++k) agree += qu[k] * qv[k];
    f += e.weight * (1.0 - agree);
  }
  return f;
}

namespace {

struct Neighbor {
  int node;
  double weight;
};

// q_u ∝ exp((−θ_u + Σ_v w_uv q_v) / T), written into out.
void node_update(const RegionGraph& g, const std::vector<std::vector<Neighbor>>& nbrs, const std::vector<double>& q,
                 int u, double temperature, double* out) {
  const std::size_t kc = g.label_count();
  double mx = -INFINITY;
  for (std::size_t k = 0; k < kc; ++k) {
    double field = -g.unary(u, k);
    for (const auto& n : nbrs[static_cast<std::size_t>(u)]) field += n.weight * q[static_cast<std::size_t>(n.node) * kc + k];
    out[k] = field / temperature;
    mx = std::max(mx, out[k]);
  }
  double z = 0.0;
  for (std::size_t k = 0; k < kc; ++k) {
    out[k] = std::exp(out[k] - mx);
    z += out[k];
  }
  for (std::size_t k = 0; k < kc; ++k) out[k] /= z;
}

MeanFieldState run_from(const RegionGraph& g, const std::vector<std::vector<Neighbor>>& nbrs, std::vector<double> q,
                        const MeanFieldConfig& cfg) {
  const std::size_t kc = g.label_count();
  MeanFieldState s;
  s.sweep_energies.push_back(mean_field_free_energy(g, q, cfg.temperature));
  std::vector<double> buf(kc);
  for (int it = 0; it < cfg.iterations; ++it) {
    for (int u = 0; u < g.node_count; ++u) {
      node_update(g, nbrs, q, u, cfg.temperature, buf.data());
      std::copy(buf.begin(), buf.end(), q.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(u) * kc));
    }
    s.sweep_energies.push_back(mean_field_free_energy(g, q, cfg.temperature));
  }
  s.free_energy = s.sweep_energies.back();
  s.q = std::move(q);
  return s;
}

}  // namespace

MeanFieldState mean_field(const RegionGraph& g, const MeanFieldConfig& cfg) {
  if (cfg.iterations < 0) throw InvalidArgument("mean_field: iterations must be nonnegative");
  if (!(cfg.temperature > 0.0)) throw InvalidArgument("mean_field: temperature must be positive");
  const std::size_t kc = g.label_count();
  if (kc == 0 || g.unaries.size() != static_cast<std::size_t>(g.node_count) * kc) {
    throw InvalidArgument("mean_field: malformed region graph");
  }
  std::vector<std::vector<Neighbor>> nbrs(static_cast<std::size_t>(g.node_count));
  for (const auto& e : g.edges) {
    if (e.u < 0 || e.v < 0 || e.u >= g.node_count || e.v >= g.node_count || e.u == e.v || !(e.weight >= 0.0)) {
      throw InvalidArgument("mean_field: malformed edge");
    }
    nbrs[static_cast<std::size_t>(e.u)].push_back({e.v, e.weight});
    nbrs[static_cast<std::size_t>(e.v)].push_back({e.u, e.weight});
  }

  // Unary-only start: the same update with every neighbor term absent.
  const std::vector<std::vector<Neighbor>> none(static_cast<std::size_t>(g.node_count));
  std::vector<double> init(g.unaries.size());
  for (int u = 0; u < g.node_count; ++u) {
    node_update(g, none, init, u, cfg.temperature, init.data() + static_cast<std::size_t>(u) * kc);
  }
  MeanFieldState best = run_from(g, nbrs, init, cfg);
  if (!cfg.multi_start || cfg.iterations == 0 || kc < 2 || g.edges.empty()) return best;

  constexpr double kSpread = 1e-3;
  for (std::size_t l = 0; l < kc; ++l) {
    std::vector<double> q(g.unaries.size(), kSpread / static_cast<double>(kc - 1));
    for (int u = 0; u < g.node_count; ++u) q[static_cast<std::size_t>(u) * kc + l] = 1.0 - kSpread;
    MeanFieldState s = run_from(g, nbrs, std::move(q), cfg);
    if (s.free_energy < best.free_energy) best = std::move(s);
  }
  return best;
}

SegmentationMask decode(const MeanFieldState& state, const RegionGraph& g, const RegionMap& regions) {
  const std::size_t kc = g.label_count();
  if (regions.region_count() != g.node_count || state.q.size() != static_cast<std::size_t>(g.node_count) * kc) {
    throw InvalidArgument("decode: state does not match graph and regions");
  }
  std::vector<std::uint8_t> region_label(static_cast<std::size_t>(g.node_count));
  for (std::size_t u = 0; u < region_label.size(); ++u) {
    const double* q = state.q.data() + u * kc;
    std::size_t best = 0;
    for (std::size_t k = 1; k < kc; ++k) {
      if (q[k] > q[best]) best = k;
    }
    region_label[u] = static_cast<std::uint8_t>(g.labels[best]);
  }
  SegmentationMask mask(regions.width(), regions.height());
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) mask.labels[p] = region_label[static_cast<std::size_t>(regions.id(p))];
  return mask;
}

}  // namespace proxyforge
