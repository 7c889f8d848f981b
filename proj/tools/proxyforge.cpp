// proxyforge: command-line front end for the proxy-annotation pipeline.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "proxyforge/crawl.hpp"
#include "proxyforge/cues.hpp"
#include "proxyforge/image_io.hpp"
#include "proxyforge/overlay.hpp"
#include "proxyforge/parallel.hpp"
#include "proxyforge/pipeline.hpp"
#include "proxyforge/regions.hpp"

namespace fs = std::filesystem;
using namespace proxyforge;

namespace {

struct Globals {
  std::string config_path;
  std::string workdir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
};

PipelineConfig resolve(const Globals& g) {
  PipelineConfig c = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  if (!g.workdir.empty()) c.workdir = g.workdir;
  if (g.seed_set) c.seed = g.seed;
  c.jobs = g.jobs;
  return c;
}

void print_reports(const std::vector<StageReport>& reports, const CategoryTable& table) {
  for (const auto& r : reports) {
    std::cout << stage_name(r.stage) << ": " << r.summary << "\n";
    if (r.target_iou) std::cout << "round-1 targets\n" << format_report_text(*r.target_iou, table);
    if (r.iou) std::cout << "round-2 masks\n" << format_report_text(*r.iou, table);
  }
}

int run_stages(const Globals&, PipelineConfig c, const std::vector<Stage>& stages) {
  const auto reports = run_pipeline(c, stages);
  print_reports(reports, c.table());
  return 0;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UnreadableFile("cannot open " + p.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

std::vector<fs::path> pngs_in(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingInput("directory " + dir.string() + " not found");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proxy ground-truth synthesis for weakly supervised segmentation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON pipeline configuration");
  app.add_option("--workdir", g.workdir, "Working directory (overrides the config)");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { g.seed = s, g.seed_set = true; }, "Random seed");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);

  // crawl
  auto* crawl = app.add_subcommand("crawl", "Fetch candidate images per keyword");
  std::string kw_file, crawl_out, endpoint;
  int limit = -1, workers = -1;
  crawl->add_option("--keywords", kw_file, "File with one keyword per line");
  crawl->add_option("--limit", limit, "Images per keyword");
  crawl->add_option("--out", crawl_out, "Output directory (default <workdir>/source)");
  crawl->add_option("--endpoint", endpoint, "Search URL template with {keyword} and {limit}");
  crawl->add_option("--workers", workers, "Concurrent downloads");

  // filter
  auto* filter = app.add_subcommand("filter", "Quality gate: blur and saturation/brightness");
  std::string manifest_path;
  double blur = -1, sv = -1;
  std::string channel;
  filter->add_option("--manifest", manifest_path, "Manifest to annotate in place (default: pipeline stage)");
  filter->add_option("--blur-thresh", blur, "Laplacian variance threshold");
  filter->add_option("--sv-thresh", sv, "Saturation and value mean threshold");
  filter->add_option("--channel", channel, "saturation or hue")->check(CLI::IsMember({"saturation", "hue"}));

  // regions
  auto* regions = app.add_subcommand("regions", "Edge maps to region maps");
  std::string edges_dir, regions_out, statistic;
  double threshold = -1;
  regions->add_option("--edges", edges_dir, "Directory of edge PNGs (default: pipeline stage)");
  regions->add_option("--threshold", threshold, "Hierarchy cut, e.g. 0, 0.25, 0.75");
  regions->add_option("--statistic", statistic, "mean, max or median")->check(CLI::IsMember({"mean", "max", "median"}));
  regions->add_option("--out", regions_out, "Output directory for direct mode");

  // heuristic
  auto* heuristic = app.add_subcommand("heuristic", "Snap saliency onto regions");
  std::string sal_dir, att_dir, heur_regions, heur_out, heur_category;
  heuristic->add_option("--sal", sal_dir, "Saliency directory (direct mode)");
  heuristic->add_option("--att", att_dir, "Attention directory, fused by pixelwise max");
  heuristic->add_option("--regions", heur_regions, "Region map directory (direct mode)");
  heuristic->add_option("--category", heur_category, "Category name for every map (direct mode)");
  heuristic->add_option("--out", heur_out, "Output directory (direct mode)");

  auto* nfm_train = app.add_subcommand("nfm-train", "Train the region noise filter");
  auto* nfm_filter = app.add_subcommand("nfm-filter", "Ignore regions the noise filter rejects");
  bool no_nfm = false;
  nfm_filter->add_flag("--disable", no_nfm, "Pass heuristic maps through unchanged");

  // refine
  auto* refine = app.add_subcommand("refine", "Round 1 targets or round 2 label-restricted masks");
  int round = 2;
  std::string scores_dir;
  bool refine_nfm = false;
  double crf_lambda = -1;
  int crf_iters = -1;
  refine->add_option("--round", round, "1 or 2")->check(CLI::IsMember({1, 2}));
  refine->add_option("--scores", scores_dir, "Directory of <id>.scores from the learner");
  refine->add_flag("--nfm", refine_nfm, "Apply the noise filter (round 1 only)");
  refine->add_option("--crf-lambda", crf_lambda, "Pairwise weight; 0 disables the CRF");
  refine->add_option("--crf-iters", crf_iters, "Mean-field sweeps");

  // eval
  auto* eval = app.add_subcommand("eval", "Per-category IoU table");
  std::string pred_dir, gt_dir, csv_out;
  eval->add_option("--pred", pred_dir, "Predicted masks (direct mode)");
  eval->add_option("--gt", gt_dir, "Ground-truth masks (direct mode)");
  eval->add_option("--csv", csv_out, "Also write the table as CSV");

  // render
  auto* render = app.add_subcommand("render", "Overlay a mask or heuristic map on an image");
  std::string r_image, r_mask, r_heur, r_out;
  render->add_option("--image", r_image, "Input image")->required();
  auto* mask_opt = render->add_option("--mask", r_mask, "Indexed mask PNG");
  auto* heur_opt = render->add_option("--heuristic", r_heur, "Heuristic map PNG (with JSON sidecar)");
  mask_opt->excludes(heur_opt);
  render->add_option("--out", r_out, "Output PNG")->required();

  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus into <workdir>/source");
  int synth_count = -1;
  synth->add_option("--count", synth_count, "Number of images");

  auto* ssm = app.add_subcommand("ssm-fit", "Fit the stand-in learner and write score maps");

  auto* run = app.add_subcommand("run", "Run several stages in dependency order");
  std::vector<std::string> stage_names;
  bool run_no_nfm = false;
  run->add_option("--stages", stage_names, "Stage names (default: filter through eval)")->delimiter(',');
  run->add_flag("--no-nfm", run_no_nfm, "Disable the noise filter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::kInvalidArgument);
  }

  try {
    PipelineConfig cfg = resolve(g);

    if (crawl->parsed()) {
      if (!kw_file.empty()) cfg.keywords = read_lines(kw_file);
      if (limit >= 0) cfg.crawl.limit = limit;
      if (workers >= 0) cfg.crawl.workers = workers;
      if (!endpoint.empty()) cfg.crawl.endpoint = endpoint;
      if (crawl_out.empty()) return run_stages(g, cfg, {Stage::kCrawl});
      cfg.validate();
      CrawlConfig cc;
      cc.endpoint_template = cfg.crawl.endpoint;
      cc.limit = cfg.crawl.limit;
      cc.out_dir = crawl_out;
      cc.workers = cfg.crawl.workers;
      cc.max_retries = cfg.crawl.max_retries;
      cc.initial_backoff = std::chrono::milliseconds(cfg.crawl.backoff_ms);
      if (const char* tok = std::getenv(kTokenEnvVar)) cc.token = tok;
      for (const auto& k : cfg.keywords) {
        const auto entries = crawl_keyword(k, cc);
        const auto n = std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.fetched(); });
        std::cout << k << ": " << n << " fetched\n";
      }
      return 0;
    }

    if (filter->parsed()) {
      if (blur >= 0) cfg.filter.blur_threshold = blur;
      if (sv >= 0) cfg.filter.sv_threshold = sv;
      if (!channel.empty()) cfg.filter.channel = channel == "hue" ? SaturationChannel::kHue : SaturationChannel::kSaturation;
      if (manifest_path.empty()) return run_stages(g, cfg, {Stage::kFilter});
      cfg.validate();
      CrawlManifest m = read_manifest(manifest_path);
      if (m.empty() && !fs::exists(manifest_path)) throw MissingInput("manifest " + manifest_path + " not found");
      const fs::path base = fs::path(manifest_path).parent_path();
      parallel_for(m.size(), cfg.jobs, [&](std::size_t i) {
        auto& e = m[i];
        if (!e.fetched()) return;
        const RasterImage img = load_raster(base / e.local_path);
        if (img.channels() != 3) {
          e.status = "rejected";
          e.reason = "grayscale";
          return;
        }
        e.quality = quality_gate(img, cfg.filter);
        if (!e.quality->accepted) {
          e.status = "rejected";
          e.reason = to_string(e.quality->reason);
        }
      });
      write_manifest(m, manifest_path);
      const auto kept = std::count_if(m.begin(), m.end(), [](const auto& e) { return e.fetched(); });
      std::cout << kept << " of " << m.size() << " entries accepted\n";
      return 0;
    }

    if (regions->parsed()) {
      if (threshold >= 0) cfg.regions.threshold = threshold;
      if (!statistic.empty()) {
        cfg.regions.statistic = statistic == "max"      ? BoundaryStatistic::kMax
                                : statistic == "median" ? BoundaryStatistic::kMedian
                                                        : BoundaryStatistic::kMean;
      }
      if (edges_dir.empty()) return run_stages(g, cfg, {Stage::kRegions});
      cfg.validate();
      if (regions_out.empty()) throw InvalidArgument("regions: --out is required with --edges");
      fs::create_directories(regions_out);
      const auto files = pngs_in(edges_dir);
      parallel_for(files.size(), cfg.jobs, [&](std::size_t i) {
        const ProbabilityMap e = load_probability_map(files[i]);
        const RegionMap base = watershed_oversegment(e);
        save_region_map(cut_hierarchy(build_ucm(base, e, cfg.regions.statistic), cfg.regions.threshold),
                        fs::path(regions_out) / files[i].filename());
      });
      std::cout << files.size() << " region maps written\n";
      return 0;
    }

    if (heuristic->parsed()) {
      if (!att_dir.empty()) cfg.heuristic.use_attention = true;
      if (sal_dir.empty()) return run_stages(g, cfg, {Stage::kHeuristic});
      cfg.validate();
      if (heur_regions.empty() || heur_out.empty() || heur_category.empty()) {
        throw InvalidArgument("heuristic: --sal needs --regions, --category and --out");
      }
      const int category = cfg.table().id_of(heur_category);
      fs::create_directories(heur_out);
      const auto files = pngs_in(heur_regions);
      parallel_for(files.size(), cfg.jobs, [&](std::size_t i) {
        const RegionMap r = load_region_map(files[i]);
        const auto load = [&](const std::string& dir) {
          const fs::path p = fs::path(dir) / files[i].filename();
          if (!fs::exists(p)) throw MissingInput("missing cue map " + p.string());
          ProbabilityMap m = load_probability_map(p);
          return (m.width() == r.width() && m.height() == r.height()) ? m : resize_bilinear(m, r.width(), r.height());
        };
        ProbabilityMap s = load(sal_dir);
        if (!att_dir.empty()) s = fuse_max(s, load(att_dir));
        save_heuristic_map(snap(s, r, category), fs::path(heur_out) / files[i].filename());
      });
      std::cout << files.size() << " heuristic maps written\n";
      return 0;
    }

    if (nfm_train->parsed()) return run_stages(g, cfg, {Stage::kNfmTrain});
    if (nfm_filter->parsed()) {
      if (no_nfm) cfg.nfm.enabled = false;
      return run_stages(g, cfg, {Stage::kNfmFilter});
    }

    if (refine->parsed()) {
      if (crf_lambda >= 0) cfg.refine.crf.lambda = crf_lambda;
      if (crf_iters >= 0) cfg.refine.mean_field.iterations = crf_iters;
      if (!scores_dir.empty()) cfg.scores_dir = scores_dir;
      if (round == 2 && refine_nfm) {
        throw ContractViolation("refine: the noise filter is only used in round 1");
      }
      if (round == 1) {
        cfg.nfm.enabled = refine_nfm;
        return run_stages(g, cfg, {Stage::kNfmFilter});
      }
      return run_stages(g, cfg, {Stage::kRefine});
    }

    if (eval->parsed()) {
      if (pred_dir.empty() && gt_dir.empty()) return run_stages(g, cfg, {Stage::kEval});
      if (pred_dir.empty() || gt_dir.empty()) throw InvalidArgument("eval: give both --pred and --gt");
      const CategoryTable table = cfg.table();
      const IouReport rep = iou_report(evaluate_directories(pred_dir, gt_dir, table, nullptr, cfg.jobs));
      std::cout << format_report_text(rep, table);
      if (!csv_out.empty()) {
        std::ofstream out(csv_out);
        if (!out) throw IoError("cannot write " + csv_out);
        out << format_report_csv(rep, table);
      }
      return 0;
    }

    if (render->parsed()) {
      const RasterImage img = load_raster(r_image);
      RasterImage out;
      if (!r_mask.empty()) out = render_overlay(img, load_mask(r_mask));
      else if (!r_heur.empty()) out = render_overlay(img, load_heuristic_map(r_heur));
      else throw InvalidArgument("render: give --mask or --heuristic");
      save_png(out, r_out);
      return 0;
    }

    if (synth->parsed()) {
      if (synth_count > 0) cfg.synth.count = synth_count;
      return run_stages(g, cfg, {Stage::kSynth});
    }

    if (ssm->parsed()) return run_stages(g, cfg, {Stage::kSsm});

    if (run->parsed()) {
      if (run_no_nfm) cfg.nfm.enabled = false;
      std::vector<Stage> stages;
      if (stage_names.empty()) {
        stages = {Stage::kFilter, Stage::kRegions, Stage::kHeuristic, Stage::kNfmTrain,
                  Stage::kNfmFilter, Stage::kSsm, Stage::kRefine, Stage::kEval};
      }
      for (const auto& n : stage_names) stages.push_back(stage_from_name(n));
      return run_stages(g, cfg, stages);
    }
  } catch (const Error& e) {
    std::cerr << "proxyforge: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "proxyforge: internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
