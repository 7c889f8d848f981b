#include <doctest.h>

#include <fstream>
#include <set>

#include "proxyforge/image_io.hpp"
#include "proxyforge/overlay.hpp"
#include "proxyforge/pipeline.hpp"
#include "support.hpp"

using namespace proxyforge;
using pftest::TempDir;
namespace fs = std::filesystem;

namespace {

PipelineConfig small_config(const fs::path& workdir, int count, std::uint64_t seed = 7) {
  PipelineConfig c;
  c.workdir = workdir;
  c.seed = seed;
  c.synth.count = count;
  c.synth.min_size = 32;
  c.synth.max_size = 40;
  c.nfm.hidden_dim = 64;
  c.ssm.iterations = 20;
  return c;
}

const std::vector<Stage> kFullRun = {Stage::kSynth,    Stage::kFilter,    Stage::kRegions, Stage::kHeuristic,
                                     Stage::kNfmTrain, Stage::kNfmFilter, Stage::kSsm,     Stage::kRefine,
                                     Stage::kEval};

void overwrite_byte(const fs::path& p) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(-1, std::ios::end);
  f.put('\x5a');
}

}  // namespace

TEST_CASE("config survives a JSON round trip") {
  PipelineConfig c;
  c.categories = {"plane", "bike", "bird"};
  c.keywords = {"plane", "bird"};
  c.seed = 99;
  c.crawl.endpoint = "http://127.0.0.1:1/search?q={kw}";
  c.crawl.limit = 17;
  c.filter.blur_threshold = 12.5;
  c.filter.channel = SaturationChannel::kHue;
  c.regions.threshold = 0.3;
  c.regions.statistic = BoundaryStatistic::kMedian;
  c.heuristic.use_attention = true;
  c.nfm.enabled = false;
  c.nfm.hidden_dim = 33;
  c.nfm.sgd.base_lr = 0.25;
  c.refine.crf.lambda = 2.0;
  c.refine.mean_field.iterations = 3;
  c.scores_dir = "elsewhere/scores";
  c.synth.count = 5;

  const nlohmann::json j = config_to_json(c);
  CHECK_FALSE(j.contains("workdir"));
  CHECK_FALSE(j.contains("jobs"));
  const PipelineConfig back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(back.categories == c.categories);
  CHECK(back.filter.channel == SaturationChannel::kHue);
  CHECK(back.regions.statistic == BoundaryStatistic::kMedian);
  CHECK(back.nfm.sgd.base_lr == 0.25);
  CHECK(back.scores_dir == fs::path("elsewhere/scores"));
}

TEST_CASE("an empty config yields the defaults") {
  const PipelineConfig c = config_from_json(nlohmann::json::object());
  const PipelineConfig d;
  CHECK(config_to_json(c) == config_to_json(d));
  CHECK(c.filter.blur_threshold == 50.0);
  CHECK(c.filter.sv_threshold == 20.0);
  CHECK(c.table().size() == 20);
}

TEST_CASE("unknown or mistyped config fields are rejected") {
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"sede", 1}}), InvalidArgument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"filter", {{"blur", 3}}}}), InvalidArgument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"filter", 3}}), InvalidArgument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"seed", "seven"}}), InvalidArgument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"regions", {{"statistic", "mode"}}}}), InvalidArgument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"filter", {{"channel", "value"}}}}), InvalidArgument);
}

TEST_CASE("load_config reports file and syntax problems") {
  TempDir tmp;
  CHECK_THROWS_AS(load_config(tmp / "absent.json"), IoError);
  {
    std::ofstream(tmp / "bad.json") << "{ \"seed\": ";
  }
  CHECK_THROWS_AS(load_config(tmp / "bad.json"), InvalidArgument);
  {
    std::ofstream(tmp / "ok.json") << R"({"seed": 4, "synth": {"count": 3}})";
  }
  const PipelineConfig c = load_config(tmp / "ok.json");
  CHECK(c.seed == 4);
  CHECK(c.synth.count == 3);
}

TEST_CASE("validation names the offending field") {
  const auto message_of = [](const PipelineConfig& c) {
    try {
      c.validate();
    } catch (const InvalidArgument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message_of(PipelineConfig{}).empty());
  PipelineConfig c;
  c.filter.blur_threshold = -1;
  CHECK(message_of(c).find("filter.blur_threshold") != std::string::npos);
  c = {};
  c.regions.threshold = 1.5;
  CHECK(message_of(c).find("regions.threshold") != std::string::npos);
  c = {};
  c.nfm.sgd.momentum = 1.0;
  CHECK(message_of(c).find("nfm.momentum") != std::string::npos);
  c = {};
  c.refine.mean_field.temperature = 0.0;
  CHECK(message_of(c).find("crf.temperature") != std::string::npos);
  c = {};
  c.keywords = {"unicorn"};
  CHECK(message_of(c).find("keywords") != std::string::npos);
  c = {};
  c.jobs = 0;
  CHECK(message_of(c).find("jobs") != std::string::npos);
}

TEST_CASE("an invalid config fails before the workdir is touched") {
  TempDir tmp;
  PipelineConfig c = small_config(tmp / "work", 4);
  c.filter.blur_threshold = -3;
  CHECK_THROWS_AS(run_pipeline(c, kFullRun), InvalidArgument);
  CHECK_FALSE(fs::exists(tmp / "work"));
}

TEST_CASE("stage names round trip") {
  std::set<std::string> names;
  for (Stage s : all_stages()) {
    CHECK(stage_from_name(stage_name(s)) == s);
    names.insert(stage_name(s));
  }
  CHECK(names.size() == all_stages().size());
  CHECK(names == std::set<std::string>{"synth", "crawl", "filter", "regions", "heuristic", "nfm-train", "nfm-filter",
                                       "ssm", "refine", "eval"});
  CHECK_THROWS_AS(stage_from_name("polish"), InvalidArgument);
}

TEST_CASE("synthetic samples are deterministic and carry foreign distractors") {
  SynthConfig sc;
  sc.count = 200;
  sc.seed = 11;
  const CategoryTable table = CategoryTable::voc();
  int distractors = 0;
  for (int i = 0; i < sc.count; ++i) {
    const SynthSample s = generate_sample(sc, table, i);
    CHECK(s.category == table.id_of(s.keyword));
    CHECK(s.image.width() >= sc.min_size);
    CHECK(s.image.width() <= sc.max_size);
    CHECK(s.image.channels() == 3);
    CHECK(s.ground_truth.width == s.image.width());
    if (s.has_distractor) {
      ++distractors;
      CHECK(s.distractor_category != 0);
      CHECK(s.distractor_category != s.category);
    } else {
      CHECK(s.distractor_category == 0);
    }
    std::set<int> labels(s.ground_truth.labels.begin(), s.ground_truth.labels.end());
    CHECK(labels == std::set<int>{0, s.category});
  }
  CHECK(distractors == doctest::Approx(20).epsilon(0.1));

  const SynthSample a = generate_sample(sc, table, 37);
  const SynthSample b = generate_sample(sc, table, 37);
  CHECK(a.image == b.image);
  CHECK(a.ground_truth.labels == b.ground_truth.labels);
  CHECK(a.saliency == b.saliency);

  SynthConfig shorter = sc;
  shorter.count = 40;
  const auto batch = generate_synthetic(shorter, table);
  REQUIRE(batch.size() == 40);
  CHECK(batch[37].image == a.image);
}

TEST_CASE("a full synthetic run is identical across job counts") {
  TempDir tmp;
  PipelineConfig c1 = small_config(tmp / "one", 16);
  PipelineConfig c4 = small_config(tmp / "four", 16);
  c4.jobs = 4;
  const auto r1 = run_pipeline(c1, kFullRun);
  const auto r4 = run_pipeline(c4, kFullRun);
  REQUIRE(r1.size() == kFullRun.size());
  REQUIRE(r1.back().target_iou.has_value());
  REQUIRE(r1.back().iou.has_value());
  CHECK(r1.back().summary == r4.back().summary);

  const auto t1 = pftest::tree_contents(tmp / "one");
  const auto t4 = pftest::tree_contents(tmp / "four");
  CHECK(t1.size() == t4.size());
  CHECK(t1 == t4);
  for (Stage s : kFullRun) {
    const std::string d = s == Stage::kSynth       ? "source"
                          : s == Stage::kNfmTrain  ? "nfm"
                          : s == Stage::kNfmFilter ? "nfm_filter"
                                                   : stage_name(s);
    CHECK_MESSAGE(t1.count(d + "/digests.json"), d);
    CHECK_MESSAGE(t1.count(d + "/config.json"), d);
  }
  CHECK(t1.count("eval/report.csv"));
  CHECK(t1.count("eval/targets_report.csv"));
}

TEST_CASE("eval stage matches a direct evaluation") {
  TempDir tmp;
  const PipelineConfig c = small_config(tmp / "w", 12);
  const auto reports = run_pipeline(c, kFullRun);
  const StageReport& ev = reports.back();
  REQUIRE(ev.stage == Stage::kEval);

  const CategoryTable table = c.table();
  std::vector<std::string> ids;
  for (const auto& e : read_manifest(tmp / "w" / "filter" / "manifest.jsonl")) {
    if (e.fetched()) ids.push_back(e.image_id());
  }
  const IouReport direct =
      iou_report(evaluate_directories(tmp / "w" / "refine", tmp / "w" / "source" / "gt", table, &ids));
  REQUIRE(ev.iou.has_value());
  CHECK(ev.iou->iou == direct.iou);
  CHECK(ev.iou->mean == direct.mean);
  std::ifstream in(tmp / "w" / "eval" / "report.csv");
  const std::string csv((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(csv == format_report_csv(direct, table));
}

TEST_CASE("downstream stages refuse missing or tampered inputs") {
  TempDir tmp;
  const PipelineConfig c = small_config(tmp / "w", 6);
  CHECK_THROWS_AS(run_pipeline(c, {Stage::kRegions}), MissingInput);

  run_pipeline(c, {Stage::kSynth, Stage::kFilter, Stage::kRegions});
  CHECK_THROWS_AS(run_pipeline(c, {Stage::kNfmTrain}), MissingInput);

  fs::path victim;
  for (const auto& e : fs::directory_iterator(tmp / "w" / "regions")) {
    if (e.path().extension() == ".png") victim = e.path();
  }
  REQUIRE_FALSE(victim.empty());
  overwrite_byte(victim);
  CHECK_THROWS_AS(run_pipeline(c, {Stage::kHeuristic}), StaleInput);

  run_pipeline(c, {Stage::kRegions});
  CHECK_NOTHROW(run_pipeline(c, {Stage::kHeuristic}));

  fs::remove(victim);
  CHECK_THROWS_AS(run_pipeline(c, {Stage::kHeuristic}), StaleInput);
}

TEST_CASE("evaluate_directories needs a ground-truth directory") {
  TempDir tmp;
  fs::create_directories(tmp / "pred");
  CHECK_THROWS_AS(evaluate_directories(tmp / "pred", tmp / "gt", CategoryTable::voc()), MissingInput);
}

TEST_CASE("mask overlay matches the reference rendering") {
  const fs::path data = PF_TEST_DATA;
  const RasterImage image = load_raster(data / "overlay_image.png");
  const SegmentationMask mask = load_mask(data / "overlay_mask.png");
  const RasterImage expected = load_raster(data / "overlay_expected.png");
  CHECK(render_overlay(image, mask) == expected);
}

TEST_CASE("overlay limits") {
  std::mt19937_64 rng(3);
  const RasterImage image = pftest::random_image(rng, 5, 4, 3);
  SegmentationMask bg;
  bg.width = 5;
  bg.height = 4;
  bg.labels.assign(20, CategoryTable::kBackgroundId);
  CHECK(render_overlay(image, bg) == image);

  SegmentationMask ign = bg;
  ign.labels.assign(20, CategoryTable::kIgnoreId);
  const RasterImage red = render_overlay(image, ign);
  for (std::size_t p = 0; p < 20; ++p) {
    CHECK(red.data()[p * 3] == 255);
    CHECK(red.data()[p * 3 + 1] == 0);
    CHECK(red.data()[p * 3 + 2] == 0);
  }

  const RasterImage gray = pftest::random_image(rng, 5, 4, 1);
  const RasterImage expanded = render_overlay(gray, bg);
  REQUIRE(expanded.channels() == 3);
  for (std::size_t p = 0; p < 20; ++p) {
    CHECK(expanded.data()[p * 3] == gray.data()[p]);
    CHECK(expanded.data()[p * 3 + 2] == gray.data()[p]);
  }

  SegmentationMask wrong = bg;
  wrong.width = 4;
  wrong.labels.resize(16);
  CHECK_THROWS_AS(render_overlay(image, wrong), InvalidArgument);
}
