#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "proxyforge/color.hpp"
#include "proxyforge/refine.hpp"
#include "support.hpp"

using namespace proxyforge;

namespace {

const CategoryTable& voc() {
  static const CategoryTable t = CategoryTable::voc();
  return t;
}

ScoreMap random_scores(std::mt19937_64& rng, int w, int h, int channels, double spread = 4) {
  ScoreMap s(w, h, channels);
  for (double& v : s.data) v = pftest::uniform(rng, -spread, spread);
  return s;
}

LabelSet random_labels(std::mt19937_64& rng, int num_categories) {
  std::vector<int> ids;
  const int n = pftest::uniform_int(rng, 1, 3);
  for (int i = 0; i < n; ++i) ids.push_back(pftest::uniform_int(rng, 1, num_categories));
  return LabelSet(ids, voc());
}

HeuristicMap blank_heuristic(int w, int h, int category, double fg) {
  return HeuristicMap{w, h, std::vector<double>(static_cast<std::size_t>(w) * h, fg), category,
                      std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
}

}  // namespace

TEST_CASE("heuristic_loss on trivial inputs") {
  ScoreMap s(3, 2, 4, 0.0);
  for (std::size_t p = 0; p < s.pixel_count(); ++p) s.pixel(p)[2] = 800.0;
  const auto perfect = heuristic_loss(s, blank_heuristic(3, 2, 2, 1.0));
  CHECK(perfect.loss == doctest::Approx(0.0).scale(1.0));
  CHECK(perfect.loss >= 0.0);

  HeuristicMap all_ignored = blank_heuristic(3, 2, 2, 0.7);
  all_ignored.ignore.assign(6, 1);
  const auto none = heuristic_loss(s, all_ignored);
  CHECK(none.loss == 0.0);
  CHECK(std::all_of(none.grad.data.begin(), none.grad.data.end(), [](double g) { return g == 0.0; }));

  // Uniform scores: each pixel contributes log(channels).
  const auto flat = heuristic_loss(ScoreMap(3, 2, 4, 1.0), blank_heuristic(3, 2, 1, 0.3));
  CHECK(flat.loss == doctest::Approx(6 * std::log(4.0)));

  CHECK_THROWS_AS(heuristic_loss(s, blank_heuristic(2, 3, 1, 0)), InvalidArgument);
  CHECK_THROWS_AS(heuristic_loss(s, blank_heuristic(3, 2, 4, 0)), InvalidArgument);
}

TEST_CASE("heuristic_loss gradient matches central differences") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = pftest::heuristic_grad_check(rng, 21, trial % 2 ? 0.3 : 0.0, heuristic_loss);
    CHECK(r.worst_rel < 1e-5);
    CHECK(r.ignored_max_abs == 0.0);
  }
}

TEST_CASE("gradient is p − t per pixel") {
  std::mt19937_64 rng(2);
  const ScoreMap s = random_scores(rng, 4, 4, 5);
  HeuristicMap h = blank_heuristic(4, 4, 3, 0.0);
  for (double& v : h.fg_prob) v = pftest::uniform(rng, 0, 1);
  const auto r = heuristic_loss(s, h);
  for (std::size_t p = 0; p < s.pixel_count(); ++p) {
    double z = 0;
    for (int k = 0; k < 5; ++k) z += std::exp(s.pixel(p)[k]);
    for (int k = 0; k < 5; ++k) {
      const double t = k == 0 ? 1 - h.fg_prob[p] : k == 3 ? h.fg_prob[p] : 0.0;
      CHECK(r.grad.pixel(p)[k] == doctest::Approx(std::exp(s.pixel(p)[k]) / z - t).epsilon(1e-12));
    }
  }
}

TEST_CASE("restricted softmax equals the softmax of the restricted scores") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const ScoreMap s = random_scores(rng, 3, 3, 21, 10);
    const std::vector<int> allowed = random_labels(rng, 20).with_background();
    const ClassProbMap t = restricted_softmax(s, allowed);
    for (std::size_t p = 0; p < s.pixel_count(); ++p) {
      double z = 0;
      for (int l : allowed) z += std::exp(s.pixel(p)[l]);
      for (int k = 0; k < 21; ++k) {
        const bool in = std::find(allowed.begin(), allowed.end(), k) != allowed.end();
        if (!in) {
          CHECK(t.pixel(p)[k] == 0.0);
        } else {
          CHECK(std::abs(t.pixel(p)[k] - std::exp(s.pixel(p)[k]) / z) <= 1e-9);
        }
      }
    }
  }
  CHECK_THROWS_AS(restricted_softmax(ScoreMap(1, 1, 3), {0, 3}), InvalidArgument);
}

TEST_CASE("refined masks never leave y ∪ {background}") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = pftest::uniform_int(rng, 4, 16), h = pftest::uniform_int(rng, 4, 16);
    ScoreMap s = random_scores(rng, w, h, 21);
    const LabelSet y = random_labels(rng, 20);
    // Make some excluded label dominate by a wide margin.
    for (std::size_t p = 0; p < s.pixel_count(); ++p) {
      for (int k = 1; k < 21; ++k)
        if (!y.contains(k) && pftest::uniform(rng, 0, 1) < 0.2) s.pixel(p)[k] += 50;
    }
    const RasterImage img = pftest::random_image(rng, w, h, 3);
    const RegionMap r = watershed_oversegment(pftest::random_map(rng, w, h));
    RefineConfig cfg;
    if (trial % 2) cfg.crf.lambda = 0.0;
    const SegmentationMask m = refine_labels(s, y, img, r, cfg);
    for (auto l : m.labels) CHECK((l == 0 || y.contains(l)));
  }
}

TEST_CASE("zero coupling is the restricted per-pixel argmax") {
  std::mt19937_64 rng(5);
  RefineConfig cfg;
  cfg.crf.lambda = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ScoreMap s = random_scores(rng, 9, 7, 21);
    const LabelSet y = random_labels(rng, 20);
    const RegionMap r = watershed_oversegment(pftest::random_map(rng, 9, 7));
    const RasterImage img = pftest::random_image(rng, 9, 7, 3);
    CHECK(refine_labels(s, y, img, r, cfg) == pftest::restricted_argmax(s, y.with_background()));
  }
  // y = every category: plain argmax.
  std::vector<int> all;
  for (int k = 1; k <= 20; ++k) all.push_back(k);
  const ScoreMap s = random_scores(rng, 5, 5, 21);
  std::vector<int> every(21);
  for (int k = 0; k < 21; ++k) every[k] = k;
  CHECK(refine_labels(s, LabelSet(all, voc()), RasterImage(5, 5, 3), RegionMap::from_labels(5, 5, std::vector<int>(25, 0)),
                      cfg) == pftest::restricted_argmax(s, every));
}

TEST_CASE("per-pixel score shifts change neither the targets nor the labels") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const ScoreMap s = random_scores(rng, 8, 8, 21);
    ScoreMap shifted = s;
    for (std::size_t p = 0; p < s.pixel_count(); ++p) {
      const double c = pftest::uniform(rng, -20, 20);
      for (int k = 0; k < 21; ++k) shifted.pixel(p)[k] += c;
    }
    const LabelSet y = random_labels(rng, 20);
    const ClassProbMap a = restricted_softmax(s, y.with_background()), b = restricted_softmax(shifted, y.with_background());
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) <= 1e-12);
    const RegionMap r = watershed_oversegment(pftest::random_map(rng, 8, 8));
    const RasterImage img = pftest::random_image(rng, 8, 8, 3);
    CHECK(refine_labels(s, y, img, r) == refine_labels(shifted, y, img, r));
  }
}

TEST_CASE("6-region scene matches exhaustive CRF decoding") {
  // 3×2 blocks of 8×8 pixels. Blocks 0, 1, 3 are category 7, the rest
  // background; neighbors of the same class share a color.
  const int bw = 8, W = 3 * bw, H = 2 * bw;
  const std::uint8_t colors[6][3] = {{200, 40, 40}, {200, 40, 40}, {40, 40, 200},
                                     {200, 40, 40}, {40, 40, 200}, {40, 40, 200}};
  const bool fg[6] = {true, true, false, true, false, false};
  std::mt19937_64 rng(7);
  int compared = 0, agreed = 0;
  for (int trial = 0; trial < 40; ++trial) {
    RasterImage img(W, H, 3);
    std::vector<int> ids;
    ScoreMap s(W, H, 21);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int b = (y / bw) * 3 + x / bw;
        ids.push_back(b);
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(colors[b][c] + pftest::uniform_int(rng, 0, 20));
        double* sp = s.pixel(static_cast<std::size_t>(y) * W + x);
        for (int k = 0; k < 21; ++k) sp[k] = pftest::uniform(rng, -1, 1) * 2.0;
        sp[fg[b] ? 7 : 0] += 0.8;
        sp[12] += 3.0;  // strong, excluded
      }
    const RegionMap r = RegionMap::from_labels(W, H, ids);
    const LabelSet y({7}, voc());
    const SegmentationMask m = refine_labels(s, y, img, r);

    // Oracle graph from the formulas, then all 2^6 labelings.
    const auto members = r.members();
    RegionGraph g;
    g.node_count = 6;
    g.labels = {0, 7};
    for (int u = 0; u < 6; ++u) {
      double m0 = 0, m7 = 0;
      for (std::size_t p : members[u]) {
        const double e0 = std::exp(s.pixel(p)[0]), e7 = std::exp(s.pixel(p)[7]);
        m0 += e0 / (e0 + e7);
        m7 += e7 / (e0 + e7);
      }
      g.unaries.push_back(-std::log(std::max(m0 / members[u].size(), 1e-8)));
      g.unaries.push_back(-std::log(std::max(m7 / members[u].size(), 1e-8)));
    }
    std::vector<double> chis;
    for (const auto& [a, b] : r.adjacency()) {
      const auto ha = color_histogram(img, members[a], 8).bins, hb = color_histogram(img, members[b], 8).bins;
      double c = 0;
      for (std::size_t i = 0; i < ha.size(); ++i)
        if (ha[i] + hb[i] > 0) c += (ha[i] - hb[i]) * (ha[i] - hb[i]) / (ha[i] + hb[i]);
      chis.push_back(c);
    }
    double beta = 0;
    for (double c : chis) beta += c;
    beta /= chis.size();
    for (std::size_t e = 0; e < chis.size(); ++e)
      g.edges.push_back({r.adjacency()[e].first, r.adjacency()[e].second, 2.0 * std::exp(-chis[e] / beta)});

    const auto map = pftest::map_labeling(g);
    const auto mm = pftest::min_marginals(g);
    for (int u = 0; u < 6; ++u) {
      if (pftest::decision_margin(mm, 2, static_cast<std::size_t>(u)) <= 0.1) continue;
      ++compared;
      const int want = g.labels[static_cast<std::size_t>(map[u])];
      agreed += m.labels[members[u].front()] == want;
      CHECK(m.labels[members[u].front()] == want);
    }
  }
  CHECK(compared >= 200);
  MESSAGE("compared " << compared << " region decisions, agreed on " << agreed);
}

TEST_CASE("targets_to_mask") {
  HeuristicMap h{4, 1, {0.2, 0.5, 0.51, 0.9}, 6, {0, 0, 0, 1}};
  const SegmentationMask m = targets_to_mask(h);
  CHECK(m.labels == std::vector<std::uint8_t>{0, 0, 6, 255});
  h.category = 0;
  CHECK_THROWS_AS(targets_to_mask(h), InvalidArgument);
}

TEST_CASE("run_round") {
  std::mt19937_64 rng(8);
  RoundItem item;
  item.id = "a";
  item.image = pftest::random_image(rng, 6, 6, 3);
  item.regions = watershed_oversegment(pftest::random_map(rng, 6, 6));
  item.y = LabelSet({3}, voc());
  item.heuristic = blank_heuristic(6, 6, 3, 0.4);
  item.scores = random_scores(rng, 6, 6, 21);

  CHECK_THROWS_AS(run_round({item}, 2, true, nullptr), ContractViolation);
  const RoundResult r2 = run_round({item}, 2, false, nullptr);
  REQUIRE(r2.masks.size() == 1);
  CHECK(r2.masks[0] == refine_labels(*item.scores, item.y, item.image, item.regions));

  const RoundResult bypass = run_round({item}, 1, false, nullptr);
  REQUIRE(bypass.heuristics.size() == 1);
  CHECK(bypass.heuristics[0] == *item.heuristic);

  CHECK_THROWS_AS(run_round({item}, 1, true, nullptr), MissingInput);
  CHECK_THROWS_AS(run_round({item}, 3, false, nullptr), InvalidArgument);
  RoundItem bare = item;
  bare.scores.reset();
  CHECK_THROWS_AS(run_round({bare}, 2, false, nullptr), MissingInput);
  bare.heuristic.reset();
  CHECK_THROWS_AS(run_round({bare}, 1, false, nullptr), MissingInput);
}

TEST_CASE("round 1 with the NFM drops the planted region") {
  const MlpParameters p = pftest::train_color_world(7);
  const pftest::PlantedFixture fx;
  RoundItem item;
  item.id = "planted";
  item.image = fx.image;
  item.regions = fx.regions;
  item.y = LabelSet({1}, CategoryTable({"a", "b", "c"}));
  item.heuristic = fx.heuristic;
  item.edges = fx.edges;
  const RoundResult r = run_round({item}, 1, true, &p);
  REQUIRE(r.heuristics.size() == 1);
  for (std::size_t px = 0; px < fx.image.pixel_count(); ++px)
    CHECK(r.heuristics[0].ignore[px] == (fx.regions.id(px) == 2));
}
