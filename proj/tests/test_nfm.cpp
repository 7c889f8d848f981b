#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "proxyforge/nfm.hpp"
#include "support.hpp"

using namespace proxyforge;
using pftest::TempDir;

namespace {

std::vector<double>* param_block(MlpParameters& p, int which) {
  switch (which) {
    case 0: return &p.w1;
    case 1: return &p.b1;
    case 2: return &p.w2;
    default: return &p.b2;
  }
}

bool grad_close(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  return diff < 1e-9 || diff <= 1e-4 * std::max(std::abs(analytic), std::abs(numeric));
}

}  // namespace

TEST_CASE("MLP gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const int in = 7, hidden = 6, classes = 4;
    MlpParameters p = MlpParameters::initialize(in, hidden, classes, seed);
    for (double& b : p.b1) b = pftest::uniform(rng, -0.2, 0.2);
    for (double& b : p.b2) b = pftest::uniform(rng, -0.2, 0.2);
    std::vector<std::vector<double>> xs(5, std::vector<double>(in));
    std::vector<LabeledRegion> batch;
    for (auto& x : xs) {
      for (double& v : x) v = pftest::uniform(rng, 0, 1) < 0.3 ? 0.0 : pftest::uniform(rng, -1, 1);
      batch.push_back({x, pftest::uniform_int(rng, 1, classes)});
    }
    MlpParameters g;
    nfm_loss_and_gradient(p, batch, &g);
    const double h = 1e-5;
    for (int which = 0; which < 4; ++which) {
      std::vector<double>& w = *param_block(p, which);
      const std::vector<double>& gw = *param_block(g, which);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double keep = w[i];
        w[i] = keep + h;
        const double up = nfm_loss_and_gradient(p, batch, nullptr);
        w[i] = keep - h;
        const double down = nfm_loss_and_gradient(p, batch, nullptr);
        w[i] = keep;
        const double numeric = (up - down) / (2 * h);
        INFO("seed " << seed << " block " << which << " index " << i);
        CHECK(grad_close(gw[i], numeric));
      }
    }
  }
}

TEST_CASE("loss is the mean cross-entropy") {
  MlpParameters p = MlpParameters::zeros(2, 3, 4);
  const std::vector<double> x{1, 2};
  const LabeledRegion batch[] = {{x, 2}};
  CHECK(nfm_loss_and_gradient(p, batch, nullptr) == doctest::Approx(std::log(4.0)));
  p.b2 = {0, 1, 0, 0};
  const double z = 3 + std::exp(1.0);
  CHECK(nfm_loss_and_gradient(p, batch, nullptr) == doctest::Approx(std::log(z) - 1.0));
  const LabeledRegion bad[] = {{x, 5}};
  CHECK_THROWS_AS(nfm_loss_and_gradient(p, bad, nullptr), InvalidArgument);
  CHECK_THROWS_AS(nfm_loss_and_gradient(p, std::span<const LabeledRegion>{}, nullptr), InvalidArgument);
}

TEST_CASE("momentum SGD step arithmetic") {
  std::mt19937_64 rng(5);
  MlpParameters p = MlpParameters::initialize(4, 3, 2, 1);
  const std::vector<double> x{0.5, -1, 0.25, 2};
  const LabeledRegion batch[] = {{x, 1}};
  SgdConfig cfg;
  cfg.base_lr = 0.3;
  MlpParameters g;
  nfm_loss_and_gradient(p, batch, &g);
  const MlpParameters before = p;
  MomentumState st = MomentumState::for_params(p);
  nfm_train_step(p, st, batch, cfg);
  CHECK(p.step_count == 1);
  const double lh = 0.3 * cfg.multipliers.hidden, lo = 0.3 * cfg.multipliers.output;
  for (std::size_t i = 0; i < p.w1.size(); ++i)
    CHECK(p.w1[i] == doctest::Approx(before.w1[i] - lh * (g.w1[i] + cfg.weight_decay * before.w1[i])));
  for (std::size_t i = 0; i < p.b1.size(); ++i) CHECK(p.b1[i] == doctest::Approx(before.b1[i] - lh * g.b1[i]));
  for (std::size_t i = 0; i < p.w2.size(); ++i)
    CHECK(p.w2[i] == doctest::Approx(before.w2[i] - lo * (g.w2[i] + cfg.weight_decay * before.w2[i])));
  for (std::size_t i = 0; i < p.b2.size(); ++i) CHECK(p.b2[i] == doctest::Approx(before.b2[i] - lo * g.b2[i]));

  // Second step carries 0.9 of the first displacement.
  MlpParameters g2;
  nfm_loss_and_gradient(p, batch, &g2);
  const MlpParameters mid = p;
  nfm_train_step(p, st, batch, cfg);
  for (std::size_t i = 0; i < p.b2.size(); ++i) {
    const double v1 = mid.b2[i] - before.b2[i];
    CHECK(p.b2[i] == doctest::Approx(mid.b2[i] + 0.9 * v1 - lo * g2.b2[i]));
  }
}

TEST_CASE("zero learning rate leaves the parameters alone") {
  MlpParameters p = MlpParameters::initialize(5, 4, 3, 2);
  const MlpParameters before = p;
  MomentumState st = MomentumState::for_params(p);
  const std::vector<double> x{1, 0, 0, 1, 0};
  const LabeledRegion batch[] = {{x, 3}};
  SgdConfig cfg;
  cfg.base_lr = 0.0;
  for (int i = 0; i < 3; ++i) nfm_train_step(p, st, batch, cfg);
  CHECK(p.w1 == before.w1);
  CHECK(p.w2 == before.w2);
  CHECK(p.b1 == before.b1);
  CHECK(p.b2 == before.b2);
  CHECK(p.step_count == 3);
}

TEST_CASE("non-finite loss is rejected without touching the parameters") {
  MlpParameters p = MlpParameters::initialize(2, 2, 2, 3);
  p.b2[0] = std::nan("");
  const MlpParameters before = p;
  MomentumState st = MomentumState::for_params(p);
  const std::vector<double> x{1, 1};
  const LabeledRegion batch[] = {{x, 1}};
  CHECK_THROWS_AS(nfm_train_step(p, st, batch, SgdConfig{}), NumericError);
  CHECK(p.w1 == before.w1);
  CHECK(p.step_count == 0);
}

TEST_CASE("training on a color-separable world converges in one epoch") {
  const MlpParameters p = pftest::train_color_world(7);
  pftest::ColorRegionWorld held_out(1007);
  CHECK(pftest::region_accuracy(p, held_out, 100) >= 0.95);
}

TEST_CASE("train_nfm is deterministic and reports one loss per non-empty image") {
  pftest::ColorRegionWorld world(3);
  auto images = world.images(12);
  images[4].labels.assign(images[4].labels.size(), CategoryTable::kIgnoreId);
  NfmTrainConfig cfg;
  cfg.hidden_dim = 32;
  cfg.max_epochs = 2;
  cfg.seed = 11;
  NfmTrainReport r1, r2;
  const auto dim = static_cast<int>(region_feature_dim(8));
  const MlpParameters a = train_nfm(images, dim, 3, cfg, &r1);
  const MlpParameters b = train_nfm(images, dim, 3, cfg, &r2);
  CHECK(a == b);
  CHECK(r1.step_losses == r2.step_losses);
  CHECK(r1.step_losses.size() == 22);
  CHECK(a.step_count == 22);
}

TEST_CASE("region features") {
  // 4×2: left half region 0 (red), right half region 1 (blue).
  RasterImage img(4, 2, 3);
  std::vector<int> ids;
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) {
      ids.push_back(x / 2);
      img.at(x, y, x < 2 ? 0 : 2) = 255;
    }
  const RegionMap r = RegionMap::from_labels(4, 2, ids);
  HeuristicMap h{4, 2, {1, 1, 0, 0, 0.5, 1, 0, 0.5}, 1, std::vector<std::uint8_t>(8, 0)};
  ProbabilityMap e(4, 2, std::vector<double>{0, 0.2, 0.4, 0, 0, 0.6, 0.8, 0});
  const auto f = extract_region_features(img, r, h, e, 2);
  REQUIRE(f.size() == 2);
  REQUIRE(f[0].size() == region_feature_dim(2));
  CHECK(f[0][histogram_bin(255, 0, 0, 2)] == 1.0);
  CHECK(f[1][histogram_bin(0, 0, 255, 2)] == 1.0);
  CHECK(f[0][8] == doctest::Approx(1.0 / 4));  // mean x 0.5 → (0.5 + 0.5) / 4
  CHECK(f[1][8] == doctest::Approx(3.0 / 4));
  CHECK(f[0][9] == doctest::Approx(0.5));
  CHECK(f[0][10] == doctest::Approx(0.5));
  CHECK(f[0][11] == doctest::Approx(3.5 / 4));
  CHECK(f[1][11] == doctest::Approx(0.5 / 4));
  CHECK(f[0][12] == doctest::Approx((0.2 + 0.6) / 2));  // x = 1 column touches region 1
  CHECK(f[1][12] == doctest::Approx((0.4 + 0.8) / 2));
  CHECK_THROWS_AS(extract_region_features(img, r, h, ProbabilityMap(2, 2), 2), InvalidArgument);
}

TEST_CASE("training labels follow the epsilon rule") {
  const RegionMap r = RegionMap::from_labels(3, 1, {0, 1, 2});
  const CategoryTable t = CategoryTable::voc();
  HeuristicMap h{3, 1, {0.0, 1e-7, 0.3}, 4, {0, 0, 0}};
  const auto labels = label_regions_for_training(h, r, LabelSet({4}, t));
  CHECK(labels == std::vector<std::pair<int, int>>{{0, CategoryTable::kIgnoreId}, {1, CategoryTable::kIgnoreId}, {2, 4}});
  const auto loose = label_regions_for_training(h, r, LabelSet({4}, t), 1e-8);
  CHECK(loose[1].second == 4);
  CHECK_THROWS_AS(label_regions_for_training(h, r, LabelSet({5}, t)), InvalidArgument);
}

TEST_CASE("filter_noise ignores exactly the planted off-category region") {
  const MlpParameters p = pftest::train_color_world(7);
  const pftest::PlantedFixture fx;
  const auto feats = extract_region_features(fx.image, fx.regions, fx.heuristic, fx.edges, 8);
  std::vector<std::optional<RegionPrediction>> preds(3);
  for (int r = 1; r < 3; ++r) preds[r] = mlp_forward(p, feats[r]);
  const LabelSet y({1}, CategoryTable({"a", "b", "c"}));
  const HeuristicMap out = filter_noise(fx.heuristic, fx.regions, preds, y);
  for (std::size_t px = 0; px < out.pixel_count(); ++px) CHECK(out.ignore[px] == (fx.regions.id(px) == 2));
  CHECK(out.fg_prob == fx.heuristic.fg_prob);

  // Allowing the planted category keeps everything.
  const LabelSet both({1, 2}, CategoryTable({"a", "b", "c"}));
  const HeuristicMap kept = filter_noise(fx.heuristic, fx.regions, preds, both);
  CHECK(kept.ignore == fx.heuristic.ignore);

  preds[1].reset();
  CHECK_THROWS_AS(filter_noise(fx.heuristic, fx.regions, preds, y), ContractViolation);
}

TEST_CASE("parameters round trip through their binary file") {
  TempDir tmp;
  MlpParameters p = MlpParameters::initialize(9, 5, 3, 77);
  p.step_count = 12;
  save_mlp_parameters(p, tmp / "m.bin");
  CHECK(load_mlp_parameters(tmp / "m.bin") == p);
  std::ofstream(tmp / "junk.bin") << "nope";
  CHECK_THROWS_AS(load_mlp_parameters(tmp / "junk.bin"), CorruptHeader);
  CHECK_THROWS_AS(load_mlp_parameters(tmp / "missing.bin"), UnreadableFile);
}
