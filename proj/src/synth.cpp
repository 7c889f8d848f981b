#include "proxyforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "proxyforge/color.hpp"

namespace proxyforge {

namespace {

struct Ellipse {
  double cx, cy, rx, ry, angle;
  bool contains(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    const double u = (c * dx + s * dy) / rx, v = (-s * dx + c * dy) / ry;
    return u * u + v * v <= 1.0;
  }
};

std::vector<std::uint8_t> rasterize(const Ellipse& e, int w, int h) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m[static_cast<std::size_t>(y) * w + x] = e.contains(x, y) ? 1 : 0;
  return m;
}

// Bilinear upsampling of a random grid with `cell` pixel spacing.
std::vector<double> smooth_noise(std::mt19937_64& rng, int w, int h, int cell, double lo, double hi) {
  const int gw = w / cell + 2, gh = h / cell + 2;
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
  for (double& g : grid) g = u(rng);
  std::vector<double> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / cell, fy = static_cast<double>(y) / cell;
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const double ax = fx - x0, ay = fy - y0;
      const auto g = [&](int gx, int gy) { return grid[static_cast<std::size_t>(gy) * gw + gx]; };
      out[static_cast<std::size_t>(y) * w + x] = (1 - ay) * ((1 - ax) * g(x0, y0) + ax * g(x0 + 1, y0)) +
                                                  ay * ((1 - ax) * g(x0, y0 + 1) + ax * g(x0 + 1, y0 + 1));
    }
  }
  return out;
}

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

SynthSample generate_sample(const SynthConfig& cfg, const CategoryTable& table, int index) {
  if (cfg.categories.empty()) throw InvalidArgument("synth: no categories configured");
  if (cfg.min_size < 16 || cfg.max_size < cfg.min_size) throw InvalidArgument("synth: bad image size range");
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  const auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const auto uint = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

  SynthSample s;
  const SynthCategory& cat = cfg.categories[static_cast<std::size_t>(index) % cfg.categories.size()];
  s.keyword = cat.name;
  s.category = table.id_of(cat.name);
  // Every category gets the same share of distractor images.
  const int rank = index / static_cast<int>(cfg.categories.size());
  s.has_distractor = cfg.categories.size() > 1 &&
                     std::floor((rank + 1) * cfg.distractor_fraction) > std::floor(rank * cfg.distractor_fraction);

  const int w = uint(cfg.min_size, cfg.max_size), h = uint(cfg.min_size, cfg.max_size);
  const double md = std::min(w, h);
  const std::size_t n = static_cast<std::size_t>(w) * h;

  const Ellipse main{uni(0.35, 0.65) * w, uni(0.35, 0.65) * h, uni(0.15, 0.27) * md, uni(0.15, 0.27) * md,
                     uni(0.0, 3.14159)};
  const auto main_mask = rasterize(main, w, h);
  std::vector<std::uint8_t> distractor_mask(n, 0);
  std::array<std::uint8_t, 3> distractor_color{};
  if (s.has_distractor) {
    // Keep blobs apart so they never share a region.
    const int margin = static_cast<int>(std::ceil(cfg.saliency_falloff)) + 3;
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      const double r = uni(0.13, 0.22) * md;
      const Ellipse d{uni(r, w - r), uni(r, h - r), r * uni(0.8, 1.2), r * uni(0.8, 1.2), uni(0.0, 3.14159)};
      auto m = rasterize(d, w, h);
      placed = std::count(m.begin(), m.end(), 1) > 0;
      for (int y = 0; y < h && placed; ++y) {
        for (int x = 0; x < w && placed; ++x) {
          if (!m[static_cast<std::size_t>(y) * w + x]) continue;
          for (int dy = -margin; dy <= margin && placed; ++dy)
            for (int dx = -margin; dx <= margin && placed; ++dx) {
              const int xx = x + dx, yy = y + dy;
              if (xx >= 0 && yy >= 0 && xx < w && yy < h && main_mask[static_cast<std::size_t>(yy) * w + xx]) placed = false;
            }
        }
      }
      if (placed) distractor_mask = std::move(m);
    }
    s.has_distractor = placed;
    // Another category's object: the keyword does not describe it.
    const std::size_t nc = cfg.categories.size();
    const std::size_t other = (static_cast<std::size_t>(index) % nc + 1 + static_cast<std::size_t>(uint(0, static_cast<int>(nc) - 2))) % nc;
    for (int k = 0; k < 3; ++k) distractor_color[k] = clamp8(cfg.categories[other].color[k] + uni(-cfg.color_jitter, cfg.color_jitter));
    s.distractor_category = table.id_of(cfg.categories[other].name);
  }

  // Background texture.
  const double base = uni(90.0, 170.0);
  const std::array<double, 3> tint{uni(-18, 18), uni(-18, 18), uni(-18, 18)};
  const auto coarse = smooth_noise(rng, w, h, 8, -20.0, 20.0);
  std::array<double, 3> jitter{};
  for (double& j : jitter) j = uni(-cfg.color_jitter, cfg.color_jitter);

  std::vector<std::uint8_t> pixels(n * 3);
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < 3; ++c) {
      double v;
      if (main_mask[p]) v = cat.color[c] + jitter[c] + uni(-6, 6);
      else if (distractor_mask[p]) v = distractor_color[c] + uni(-6, 6);
      else v = base + tint[c] + coarse[p] + uni(-8, 8);
      pixels[p * 3 + c] = clamp8(v);
    }
  }
  s.image = RasterImage(w, h, 3, std::move(pixels));

  // Saliency: distance into the blob, saturating at `falloff` pixels from
  // its boundary; exactly 0 on the background.
  std::vector<double> sal(n, 0.0);
  const int reach = static_cast<int>(std::ceil(cfg.saliency_falloff));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const auto& m = main_mask[p] ? main_mask : distractor_mask;
      if (!m[p]) continue;
      double best = cfg.saliency_falloff;
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          if (!m[static_cast<std::size_t>(yy) * w + xx]) best = std::min(best, std::hypot(dx, dy));
        }
      sal[p] = best / cfg.saliency_falloff;
    }
  }
  s.saliency = ProbabilityMap(w, h, std::move(sal));

  // Edges: strong on the inner blob boundary, zero inside, weak smooth
  // noise over the background.
  auto edge = smooth_noise(rng, w, h, 12, 0.02, 0.25);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const auto& m = main_mask[p] ? main_mask : distractor_mask;
      if (!m[p]) continue;
      const bool boundary = (x > 0 && !m[p - 1]) || (x + 1 < w && !m[p + 1]) || (y > 0 && !m[p - w]) ||
                            (y + 1 < h && !m[p + w]);
      edge[p] = boundary ? 0.9 : 0.0;
    }
  }
  // Blurred response outside the blob, decaying over three pixels.
  constexpr int kSpread = 3;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      if (main_mask[p] || distractor_mask[p]) continue;
      double best = INFINITY;
      for (int dy = -kSpread; dy <= kSpread; ++dy)
        for (int dx = -kSpread; dx <= kSpread; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          const std::size_t q = static_cast<std::size_t>(yy) * w + xx;
          if (main_mask[q] || distractor_mask[q]) best = std::min(best, std::hypot(dx, dy));
        }
      if (best <= kSpread) edge[p] = std::max(edge[p], 0.9 * (1.0 - (best - 1.0) / kSpread));
    }
  }
  s.edges = ProbabilityMap(w, h, std::move(edge));

  s.ground_truth = SegmentationMask(w, h, CategoryTable::kBackgroundId);
  for (std::size_t p = 0; p < n; ++p) {
    if (main_mask[p]) s.ground_truth.labels[p] = static_cast<std::uint8_t>(s.category);
  }
  return s;
}

std::vector<SynthSample> generate_synthetic(const SynthConfig& config, const CategoryTable& table) {
  std::vector<SynthSample> out;
  out.reserve(static_cast<std::size_t>(config.count));
  for (int i = 0; i < config.count; ++i) out.push_back(generate_sample(config, table, i));
  return out;
}

}  // namespace proxyforge
