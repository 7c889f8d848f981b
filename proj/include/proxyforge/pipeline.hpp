#pragma once

// Stage orchestration over a working directory.
//
//   source/manifest.jsonl, source/images/...   crawl or synth
//   source/cues/{saliency,attention,edges}/<id>.png
//   source/gt/<id>.png                          optional, for eval
//   filter/ regions/ heuristic/ nfm/ nfm_filter/ ssm/ refine/ eval/
//
// nfm_filter/ holds the round-1 targets and, under masks/, the same targets
// as label masks. eval/ scores those (targets_report.*) and, when refine/
// exists, the round-2 masks (report.*).
//
// Every stage directory receives config.json (the resolved configuration)
// and digests.json (SHA-256 of what it read and wrote). A stage refuses to
// read an upstream directory whose files no longer match their digests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "proxyforge/crawl.hpp"
#include "proxyforge/eval.hpp"
#include "proxyforge/nfm.hpp"
#include "proxyforge/qfilter.hpp"
#include "proxyforge/refine.hpp"
#include "proxyforge/regions.hpp"
#include "proxyforge/ssm.hpp"
#include "proxyforge/synth.hpp"

namespace proxyforge {

enum class Stage { kSynth, kCrawl, kFilter, kRegions, kHeuristic, kNfmTrain, kNfmFilter, kSsm, kRefine, kEval };

/// Dependency order.
const std::vector<Stage>& all_stages();
std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct PipelineConfig {
  std::filesystem::path workdir = "work";
  std::vector<std::string> categories;  ///< empty selects the 20 VOC categories
  std::vector<std::string> keywords;    ///< crawl targets
  std::uint64_t seed = 0;
  int jobs = 1;  ///< never serialized: outputs must not depend on it

  struct Crawl {
    std::string endpoint;
    int limit = 2000;
    int workers = 8;
    int max_retries = 4;
    int backoff_ms = 200;
  } crawl;
  QualityGateConfig filter;
  struct Regions {
    double threshold = 0.0;
    BoundaryStatistic statistic = BoundaryStatistic::kMean;
  } regions;
  struct Heuristic {
    bool use_attention = false;
  } heuristic;
  struct Nfm {
    bool enabled = true;
    int hidden_dim = 1024;
    SgdConfig sgd;
    int max_epochs = 1;
    double epsilon = kForegroundEpsilon;
    int bins_per_channel = 8;
  } nfm;
  SsmConfig ssm;
  RefineConfig refine;
  /// Score maps from an external learner (<id>.scores); empty uses ssm/.
  std::filesystem::path scores_dir;
  SynthConfig synth;

  CategoryTable table() const;
  /// Throws InvalidArgument naming the first offending field.
  void validate() const;
};

PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

struct StageReport {
  Stage stage;
  std::size_t items = 0;
  std::string summary;
  std::optional<IouReport> iou;         ///< round-2 masks
  std::optional<IouReport> target_iou;  ///< round-1 targets
};

/// Runs the requested stages in dependency order. The config is validated
/// before anything is touched.
std::vector<StageReport> run_pipeline(const PipelineConfig& config, const std::vector<Stage>& stages);

/// Confusion matrix over every ground-truth PNG in `gt_dir` (or only `ids`
/// when given) against the same-named file in `pred_dir`.
ConfusionMatrix evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                     const CategoryTable& table, const std::vector<std::string>* ids = nullptr,
                                     int jobs = 1);

}  // namespace proxyforge
