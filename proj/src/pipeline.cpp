#include "proxyforge/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

#include "proxyforge/cues.hpp"
#include "proxyforge/digest.hpp"
#include "proxyforge/image_io.hpp"
#include "proxyforge/parallel.hpp"

namespace proxyforge {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Stages

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> kAll = {Stage::kSynth,    Stage::kCrawl,     Stage::kFilter, Stage::kRegions,
                                          Stage::kHeuristic, Stage::kNfmTrain, Stage::kNfmFilter, Stage::kSsm,
                                          Stage::kRefine,   Stage::kEval};
  return kAll;
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::kSynth: return "synth";
    case Stage::kCrawl: return "crawl";
    case Stage::kFilter: return "filter";
    case Stage::kRegions: return "regions";
    case Stage::kHeuristic: return "heuristic";
    case Stage::kNfmTrain: return "nfm-train";
    case Stage::kNfmFilter: return "nfm-filter";
    case Stage::kSsm: return "ssm";
    case Stage::kRefine: return "refine";
    case Stage::kEval: return "eval";
  }
  return "?";
}

Stage stage_from_name(const std::string& name) {
  for (Stage s : all_stages()) {
    if (stage_name(s) == name) return s;
  }
  throw InvalidArgument("unknown stage '" + name + "'");
}

namespace {

std::string stage_dir(Stage s) {
  switch (s) {
    case Stage::kSynth:
    case Stage::kCrawl: return "source";
    case Stage::kNfmTrain: return "nfm";
    case Stage::kNfmFilter: return "nfm_filter";
    default: return stage_name(s);
  }
}

// ---------------------------------------------------------------------------
// Config

template <typename T>
void take(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
      throw InvalidArgument(std::string("config field '") + key + "': " + e.what());
    }
  }
}

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw InvalidArgument("config section '" + where + "' must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* allowed) { return k == allowed; })) {
      throw InvalidArgument("unknown config field '" + where + (where.empty() ? "" : ".") + k + "'");
    }
  }
}

const json& section(const json& j, const char* key) {
  static const json kEmpty = json::object();
  return j.contains(key) ? j.at(key) : kEmpty;
}

std::string statistic_name(BoundaryStatistic s) {
  switch (s) {
    case BoundaryStatistic::kMean: return "mean";
    case BoundaryStatistic::kMax: return "max";
    case BoundaryStatistic::kMedian: return "median";
  }
  return "mean";
}

}  // namespace

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  only_keys(j, "", {"workdir", "categories", "keywords", "seed", "crawl", "filter", "regions", "heuristic", "nfm",
                    "ssm", "crf", "refine", "synth"});
  std::string workdir = c.workdir.string();
  take(j, "workdir", workdir);
  c.workdir = workdir;
  take(j, "categories", c.categories);
  take(j, "keywords", c.keywords);
  take(j, "seed", c.seed);

  const json& cr = section(j, "crawl");
  only_keys(cr, "crawl", {"endpoint", "limit", "workers", "max_retries", "backoff_ms"});
  take(cr, "endpoint", c.crawl.endpoint);
  take(cr, "limit", c.crawl.limit);
  take(cr, "workers", c.crawl.workers);
  take(cr, "max_retries", c.crawl.max_retries);
  take(cr, "backoff_ms", c.crawl.backoff_ms);

  const json& f = section(j, "filter");
  only_keys(f, "filter", {"blur_threshold", "sv_threshold", "channel"});
  take(f, "blur_threshold", c.filter.blur_threshold);
  take(f, "sv_threshold", c.filter.sv_threshold);
  std::string channel = "saturation";
  take(f, "channel", channel);
  if (channel == "saturation") c.filter.channel = SaturationChannel::kSaturation;
  else if (channel == "hue") c.filter.channel = SaturationChannel::kHue;
  else throw InvalidArgument("config field 'filter.channel' must be \"saturation\" or \"hue\"");

  const json& r = section(j, "regions");
  only_keys(r, "regions", {"threshold", "statistic"});
  take(r, "threshold", c.regions.threshold);
  std::string stat = "mean";
  take(r, "statistic", stat);
  if (stat == "mean") c.regions.statistic = BoundaryStatistic::kMean;
  else if (stat == "max") c.regions.statistic = BoundaryStatistic::kMax;
  else if (stat == "median") c.regions.statistic = BoundaryStatistic::kMedian;
  else throw InvalidArgument("config field 'regions.statistic' must be mean, max or median");

  const json& h = section(j, "heuristic");
  only_keys(h, "heuristic", {"use_attention"});
  take(h, "use_attention", c.heuristic.use_attention);

  const json& n = section(j, "nfm");
  only_keys(n, "nfm", {"enabled", "hidden_dim", "base_lr", "hidden_lr_mult", "output_lr_mult", "momentum",
                       "weight_decay", "max_epochs", "epsilon", "bins_per_channel"});
  take(n, "enabled", c.nfm.enabled);
  take(n, "hidden_dim", c.nfm.hidden_dim);
  take(n, "base_lr", c.nfm.sgd.base_lr);
  take(n, "hidden_lr_mult", c.nfm.sgd.multipliers.hidden);
  take(n, "output_lr_mult", c.nfm.sgd.multipliers.output);
  take(n, "momentum", c.nfm.sgd.momentum);
  take(n, "weight_decay", c.nfm.sgd.weight_decay);
  take(n, "max_epochs", c.nfm.max_epochs);
  take(n, "epsilon", c.nfm.epsilon);
  take(n, "bins_per_channel", c.nfm.bins_per_channel);

  const json& s = section(j, "ssm");
  only_keys(s, "ssm", {"iterations", "learning_rate", "l2", "bins_per_channel"});
  take(s, "iterations", c.ssm.iterations);
  take(s, "learning_rate", c.ssm.learning_rate);
  take(s, "l2", c.ssm.l2);
  take(s, "bins_per_channel", c.ssm.bins_per_channel);

  const json& k = section(j, "crf");
  only_keys(k, "crf", {"lambda", "beta", "bins_per_channel", "iterations", "temperature", "multi_start"});
  take(k, "lambda", c.refine.crf.lambda);
  take(k, "beta", c.refine.crf.beta);
  take(k, "bins_per_channel", c.refine.crf.bins_per_channel);
  take(k, "iterations", c.refine.mean_field.iterations);
  take(k, "temperature", c.refine.mean_field.temperature);
  take(k, "multi_start", c.refine.mean_field.multi_start);

  const json& rf = section(j, "refine");
  only_keys(rf, "refine", {"scores_dir"});
  std::string scores_dir;
  take(rf, "scores_dir", scores_dir);
  c.scores_dir = scores_dir;

  const json& y = section(j, "synth");
  only_keys(y, "synth", {"count", "min_size", "max_size", "distractor_fraction", "color_jitter", "saliency_falloff"});
  take(y, "count", c.synth.count);
  take(y, "min_size", c.synth.min_size);
  take(y, "max_size", c.synth.max_size);
  take(y, "distractor_fraction", c.synth.distractor_fraction);
  take(y, "color_jitter", c.synth.color_jitter);
  take(y, "saliency_falloff", c.synth.saliency_falloff);
  return c;
}

json config_to_json(const PipelineConfig& c) {
  return json{
      {"categories", c.categories},
      {"keywords", c.keywords},
      {"seed", c.seed},
      {"crawl",
       {{"endpoint", c.crawl.endpoint},
        {"limit", c.crawl.limit},
        {"workers", c.crawl.workers},
        {"max_retries", c.crawl.max_retries},
        {"backoff_ms", c.crawl.backoff_ms}}},
      {"filter",
       {{"blur_threshold", c.filter.blur_threshold},
        {"sv_threshold", c.filter.sv_threshold},
        {"channel", c.filter.channel == SaturationChannel::kSaturation ? "saturation" : "hue"}}},
      {"regions", {{"threshold", c.regions.threshold}, {"statistic", statistic_name(c.regions.statistic)}}},
      {"heuristic", {{"use_attention", c.heuristic.use_attention}}},
      {"nfm",
       {{"enabled", c.nfm.enabled},
        {"hidden_dim", c.nfm.hidden_dim},
        {"base_lr", c.nfm.sgd.base_lr},
        {"hidden_lr_mult", c.nfm.sgd.multipliers.hidden},
        {"output_lr_mult", c.nfm.sgd.multipliers.output},
        {"momentum", c.nfm.sgd.momentum},
        {"weight_decay", c.nfm.sgd.weight_decay},
        {"max_epochs", c.nfm.max_epochs},
        {"epsilon", c.nfm.epsilon},
        {"bins_per_channel", c.nfm.bins_per_channel}}},
      {"ssm",
       {{"iterations", c.ssm.iterations},
        {"learning_rate", c.ssm.learning_rate},
        {"l2", c.ssm.l2},
        {"bins_per_channel", c.ssm.bins_per_channel}}},
      {"crf",
       {{"lambda", c.refine.crf.lambda},
        {"beta", c.refine.crf.beta},
        {"bins_per_channel", c.refine.crf.bins_per_channel},
        {"iterations", c.refine.mean_field.iterations},
        {"temperature", c.refine.mean_field.temperature},
        {"multi_start", c.refine.mean_field.multi_start}}},
      {"refine", {{"scores_dir", c.scores_dir.generic_string()}}},
      {"synth",
       {{"count", c.synth.count},
        {"min_size", c.synth.min_size},
        {"max_size", c.synth.max_size},
        {"distractor_fraction", c.synth.distractor_fraction},
        {"color_jitter", c.synth.color_jitter},
        {"saliency_falloff", c.synth.saliency_falloff}}},
  };
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UnreadableFile("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

CategoryTable PipelineConfig::table() const {
  return categories.empty() ? CategoryTable::voc() : CategoryTable(categories);
}

void PipelineConfig::validate() const {
  const auto require = [](bool ok, const char* field, const char* rule) {
    if (!ok) throw InvalidArgument(std::string("config field '") + field + "' " + rule);
  };
  const CategoryTable t = table();
  for (const auto& k : keywords) require(t.contains(k), "keywords", "must name known categories");
  require(jobs >= 1, "jobs", "must be at least 1");
  require(crawl.limit >= 1, "crawl.limit", "must be at least 1");
  require(crawl.workers >= 1, "crawl.workers", "must be at least 1");
  require(crawl.max_retries >= 0, "crawl.max_retries", "must be nonnegative");
  require(crawl.backoff_ms >= 0, "crawl.backoff_ms", "must be nonnegative");
  require(filter.blur_threshold >= 0.0, "filter.blur_threshold", "must be nonnegative");
  require(filter.sv_threshold >= 0.0 && filter.sv_threshold <= 255.0, "filter.sv_threshold", "must lie in [0, 255]");
  require(regions.threshold >= 0.0 && regions.threshold <= 1.0, "regions.threshold", "must lie in [0, 1]");
  require(nfm.hidden_dim >= 1, "nfm.hidden_dim", "must be at least 1");
  require(nfm.sgd.base_lr >= 0.0, "nfm.base_lr", "must be nonnegative");
  require(nfm.sgd.multipliers.hidden >= 0.0, "nfm.hidden_lr_mult", "must be nonnegative");
  require(nfm.sgd.multipliers.output >= 0.0, "nfm.output_lr_mult", "must be nonnegative");
  require(nfm.sgd.momentum >= 0.0 && nfm.sgd.momentum < 1.0, "nfm.momentum", "must lie in [0, 1)");
  require(nfm.sgd.weight_decay >= 0.0, "nfm.weight_decay", "must be nonnegative");
  require(nfm.max_epochs >= 0, "nfm.max_epochs", "must be nonnegative");
  require(nfm.epsilon >= 0.0, "nfm.epsilon", "must be nonnegative");
  require(nfm.bins_per_channel >= 2 && nfm.bins_per_channel <= 256, "nfm.bins_per_channel", "must lie in [2, 256]");
  require(ssm.iterations >= 0, "ssm.iterations", "must be nonnegative");
  require(ssm.learning_rate >= 0.0, "ssm.learning_rate", "must be nonnegative");
  require(ssm.l2 >= 0.0, "ssm.l2", "must be nonnegative");
  require(ssm.bins_per_channel >= 2 && ssm.bins_per_channel <= 256, "ssm.bins_per_channel", "must lie in [2, 256]");
  require(refine.crf.lambda >= 0.0, "crf.lambda", "must be nonnegative");
  require(refine.crf.bins_per_channel >= 2 && refine.crf.bins_per_channel <= 256, "crf.bins_per_channel",
          "must lie in [2, 256]");
  require(refine.mean_field.iterations >= 0, "crf.iterations", "must be nonnegative");
  require(refine.mean_field.temperature > 0.0, "crf.temperature", "must be positive");
  require(synth.count >= 1, "synth.count", "must be at least 1");
  require(synth.min_size >= 16 && synth.max_size >= synth.min_size, "synth.min_size", "must be >= 16 and <= max_size");
  require(synth.distractor_fraction >= 0.0 && synth.distractor_fraction <= 1.0, "synth.distractor_fraction",
          "must lie in [0, 1]");
  require(synth.saliency_falloff > 0.0, "synth.saliency_falloff", "must be positive");
}

// ---------------------------------------------------------------------------
// Stage bookkeeping

namespace {

struct Item {
  std::string id;
  std::string keyword;
  int category = 0;
  fs::path image_path;
};

class Runner {
 public:
  explicit Runner(const PipelineConfig& cfg) : cfg_(cfg), table_(cfg.table()), root_(cfg.workdir) {}

  StageReport run(Stage s);

 private:
  fs::path dir(Stage s) const { return root_ / stage_dir(s); }
  fs::path source() const { return root_ / "source"; }
  fs::path scores_dir() const { return cfg_.scores_dir.empty() ? dir(Stage::kSsm) : cfg_.scores_dir; }
  fs::path cue(const char* kind, const std::string& id) const { return source() / "cues" / kind / (id + ".png"); }

  std::string rel(const fs::path& p) const { return fs::relative(p, root_).generic_string(); }

  // Confirms an upstream stage ran and that its outputs are untouched.
  void require_stage(Stage s) const {
    const fs::path digests = dir(s) / "digests.json";
    if (!fs::exists(digests)) {
      throw MissingInput("stage '" + stage_name(s) + "' has not been run: " + digests.string() + " is missing");
    }
    std::ifstream in(digests);
    const json j = json::parse(in);
    for (const auto& [path, hash] : j.at("outputs").items()) {
      const fs::path full = root_ / path;
      if (!fs::exists(full)) throw StaleInput("output of stage '" + stage_name(s) + "' is gone: " + full.string());
      if (sha256_file(full) != hash.get<std::string>()) {
        throw StaleInput("output of stage '" + stage_name(s) + "' changed since it was written: " + full.string() +
                         "; rerun '" + stage_name(s) + "'");
      }
    }
  }

  void begin(Stage s) {
    const fs::path d = dir(s);
    if (s != Stage::kSynth && s != Stage::kCrawl) fs::remove_all(d);
    fs::create_directories(d);
    inputs_.clear();
    outputs_.clear();
  }

  void finish(Stage s) {
    auto hash_all = [&](const std::vector<fs::path>& files) {
      std::vector<std::string> hashes(files.size());
      parallel_for(files.size(), cfg_.jobs, [&](std::size_t i) { hashes[i] = sha256_file(files[i]); });
      json out = json::object();
      for (std::size_t i = 0; i < files.size(); ++i) out[rel(files[i])] = hashes[i];
      return out;
    };
    const json digests{{"stage", stage_name(s)}, {"inputs", hash_all(inputs_)}, {"outputs", hash_all(outputs_)}};
    write_text(dir(s) / "config.json", config_to_json(cfg_).dump(2) + "\n");
    write_text(dir(s) / "digests.json", digests.dump(2) + "\n");
  }

  static void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
  }

  void need(const fs::path& p) const {
    if (!fs::exists(p)) throw MissingInput("missing input " + p.string());
  }

  std::vector<Item> accepted_items() const {
    require_stage(Stage::kFilter);
    std::vector<Item> items;
    for (const auto& e : read_manifest(dir(Stage::kFilter) / "manifest.jsonl")) {
      if (!e.fetched()) continue;
      items.push_back({e.image_id(), e.keyword, table_.id_of(e.keyword), source() / e.local_path});
    }
    return items;
  }

  RasterImage load_image(const Item& it) const {
    need(it.image_path);
    return load_raster(it.image_path);
  }

  ProbabilityMap load_cue(const char* kind, const std::string& id, int w, int h) const {
    const fs::path p = cue(kind, id);
    need(p);
    ProbabilityMap m = load_probability_map(p);
    if (m.width() != w || m.height() != h) m = resize_bilinear(m, w, h);
    return m;
  }

  // Records every file in `files` under inputs/outputs in index order.
  void add_inputs(const std::vector<std::vector<fs::path>>& per_item) {
    for (const auto& v : per_item) inputs_.insert(inputs_.end(), v.begin(), v.end());
  }
  void add_outputs(const std::vector<std::vector<fs::path>>& per_item) {
    for (const auto& v : per_item) outputs_.insert(outputs_.end(), v.begin(), v.end());
  }

  static fs::path sidecar(const fs::path& png) { return fs::path(png).replace_extension(".json"); }

  StageReport synth();
  StageReport crawl();
  StageReport filter();
  StageReport regions();
  StageReport heuristic();
  StageReport nfm_train();
  StageReport nfm_filter();
  StageReport ssm();
  StageReport refine();
  StageReport eval();

  std::vector<RoundItem> round_items(const std::vector<Item>& items, bool need_heuristic, bool need_edges,
                                     bool need_scores, std::vector<std::vector<fs::path>>* read);

  const PipelineConfig& cfg_;
  CategoryTable table_;
  fs::path root_;
  std::vector<fs::path> inputs_, outputs_;
};

StageReport Runner::run(Stage s) {
  begin(s);
  StageReport r;
  switch (s) {
    case Stage::kSynth: r = synth(); break;
    case Stage::kCrawl: r = crawl(); break;
    case Stage::kFilter: r = filter(); break;
    case Stage::kRegions: r = regions(); break;
    case Stage::kHeuristic: r = heuristic(); break;
    case Stage::kNfmTrain: r = nfm_train(); break;
    case Stage::kNfmFilter: r = nfm_filter(); break;
    case Stage::kSsm: r = ssm(); break;
    case Stage::kRefine: r = refine(); break;
    case Stage::kEval: r = eval(); break;
  }
  r.stage = s;
  finish(s);
  return r;
}

StageReport Runner::synth() {
  const fs::path src = source();
  for (const char* sub : {"images", "cues", "gt"}) fs::remove_all(src / sub);
  fs::remove(src / "manifest.jsonl");
  SynthConfig sc = cfg_.synth;
  sc.seed = cfg_.seed;
  const std::size_t n = static_cast<std::size_t>(sc.count);
  std::vector<ManifestEntry> entries(n);
  std::vector<std::vector<fs::path>> written(n);
  for (const char* kind : {"saliency", "edges"}) fs::create_directories(src / "cues" / kind);
  fs::create_directories(src / "gt");
  parallel_for(n, cfg_.jobs, [&](std::size_t i) {
    const SynthSample s = generate_sample(sc, table_, static_cast<int>(i));
    fs::create_directories(src / "images" / s.keyword);
    const fs::path tmp = src / "images" / s.keyword / ("tmp-" + std::to_string(i) + ".png");
    save_png(s.image, tmp);
    ManifestEntry& e = entries[i];
    e.keyword = s.keyword;
    e.url = "synth://" + std::to_string(i);
    e.content_hash = sha256_file(tmp);
    e.local_path = "images/" + s.keyword + "/" + e.image_id() + ".png";
    fs::rename(tmp, src / e.local_path);
    save_probability_map(s.saliency, cue("saliency", e.image_id()));
    save_probability_map(s.edges, cue("edges", e.image_id()));
    save_mask(s.ground_truth, src / "gt" / (e.image_id() + ".png"));
    written[i] = {src / e.local_path, cue("saliency", e.image_id()), cue("edges", e.image_id()),
                  src / "gt" / (e.image_id() + ".png")};
  });
  write_manifest(entries, src / "manifest.jsonl");
  add_outputs(written);
  outputs_.push_back(src / "manifest.jsonl");
  return {Stage::kSynth, n, std::to_string(n) + " synthetic images", std::nullopt, std::nullopt};
}

StageReport Runner::crawl() {
  if (cfg_.keywords.empty()) throw InvalidArgument("crawl: no keywords configured");
  CrawlConfig cc;
  cc.endpoint_template = cfg_.crawl.endpoint;
  cc.limit = cfg_.crawl.limit;
  cc.out_dir = source();
  cc.workers = cfg_.crawl.workers;
  cc.max_retries = cfg_.crawl.max_retries;
  cc.initial_backoff = std::chrono::milliseconds(cfg_.crawl.backoff_ms);
  if (const char* tok = std::getenv(kTokenEnvVar)) cc.token = tok;
  std::size_t fetched = 0;
  for (const auto& k : cfg_.keywords) {
    for (const auto& e : crawl_keyword(k, cc)) fetched += e.fetched() ? 1 : 0;
  }
  for (const auto& e : read_manifest(source() / "manifest.jsonl")) {
    if (e.fetched()) outputs_.push_back(source() / e.local_path);
  }
  outputs_.push_back(source() / "manifest.jsonl");
  return {Stage::kCrawl, fetched, std::to_string(fetched) + " images fetched", std::nullopt, std::nullopt};
}

StageReport Runner::filter() {
  const fs::path manifest_path = source() / "manifest.jsonl";
  need(manifest_path);
  CrawlManifest entries = read_manifest(manifest_path);
  std::vector<std::vector<fs::path>> read(entries.size());
  parallel_for(entries.size(), cfg_.jobs, [&](std::size_t i) {
    ManifestEntry& e = entries[i];
    if (!e.fetched()) return;
    const fs::path p = source() / e.local_path;
    read[i] = {p};
    RasterImage img;
    try {
      img = load_raster(p);
    } catch (const FormatError& err) {
      e.status = "rejected";
      e.reason = "undecodable";
      return;
    }
    if (img.channels() != 3) {
      e.status = "rejected";
      e.reason = "grayscale";
      return;
    }
    e.quality = quality_gate(img, cfg_.filter);
    if (!e.quality->accepted) {
      e.status = "rejected";
      e.reason = to_string(e.quality->reason);
    }
  });
  add_inputs(read);
  inputs_.push_back(manifest_path);
  write_manifest(entries, dir(Stage::kFilter) / "manifest.jsonl");
  outputs_.push_back(dir(Stage::kFilter) / "manifest.jsonl");
  const auto kept = std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.fetched(); });
  return {Stage::kFilter, entries.size(),
          std::to_string(kept) + " of " + std::to_string(entries.size()) + " images accepted", std::nullopt, std::nullopt};
}

StageReport Runner::regions() {
  const auto items = accepted_items();
  std::vector<std::vector<fs::path>> read(items.size()), wrote(items.size());
  std::vector<std::size_t> counts(items.size());
  parallel_for(items.size(), cfg_.jobs, [&](std::size_t i) {
    const RasterImage img = load_image(items[i]);
    const ProbabilityMap edges = load_cue("edges", items[i].id, img.width(), img.height());
    const RegionMap base = watershed_oversegment(edges);
    const RegionMap cut = cut_hierarchy(build_ucm(base, edges, cfg_.regions.statistic), cfg_.regions.threshold);
    const fs::path out = dir(Stage::kRegions) / (items[i].id + ".png");
    save_region_map(cut, out);
    counts[i] = static_cast<std::size_t>(cut.region_count());
    read[i] = {items[i].image_path, cue("edges", items[i].id)};
    wrote[i] = {out, sidecar(out)};
  });
  add_inputs(read);
  add_outputs(wrote);
  std::size_t total = 0;
  for (auto c : counts) total += c;
  return {Stage::kRegions, items.size(),
          std::to_string(items.size()) + " region maps, " + std::to_string(total) + " regions", std::nullopt, std::nullopt};
}

StageReport Runner::heuristic() {
  const auto items = accepted_items();
  require_stage(Stage::kRegions);
  std::vector<std::vector<fs::path>> read(items.size()), wrote(items.size());
  parallel_for(items.size(), cfg_.jobs, [&](std::size_t i) {
    const fs::path rpath = dir(Stage::kRegions) / (items[i].id + ".png");
    const RegionMap regions = load_region_map(rpath);
    ProbabilityMap sal = load_cue("saliency", items[i].id, regions.width(), regions.height());
    read[i] = {cue("saliency", items[i].id), rpath, sidecar(rpath)};
    if (cfg_.heuristic.use_attention) {
      sal = fuse_max(sal, load_cue("attention", items[i].id, regions.width(), regions.height()));
      read[i].push_back(cue("attention", items[i].id));
    }
    const fs::path out = dir(Stage::kHeuristic) / (items[i].id + ".png");
    save_heuristic_map(snap(sal, regions, items[i].category), out);
    wrote[i] = {out, sidecar(out)};
  });
  add_inputs(read);
  add_outputs(wrote);
  return {Stage::kHeuristic, items.size(), std::to_string(items.size()) + " heuristic maps", std::nullopt, std::nullopt};
}

StageReport Runner::nfm_train() {
  const auto items = accepted_items();
  require_stage(Stage::kRegions);
  require_stage(Stage::kHeuristic);
  std::vector<NfmImage> data(items.size());
  std::vector<std::vector<fs::path>> read(items.size());
  parallel_for(items.size(), cfg_.jobs, [&](std::size_t i) {
    const RasterImage img = load_image(items[i]);
    const fs::path rpath = dir(Stage::kRegions) / (items[i].id + ".png");
    const fs::path hpath = dir(Stage::kHeuristic) / (items[i].id + ".png");
    const RegionMap regions = load_region_map(rpath);
    const HeuristicMap h = load_heuristic_map(hpath);
    const ProbabilityMap edges = load_cue("edges", items[i].id, img.width(), img.height());
    data[i].features = extract_region_features(img, regions, h, edges, cfg_.nfm.bins_per_channel);
    const LabelSet y({items[i].category}, table_);
    for (const auto& [r, label] : label_regions_for_training(h, regions, y, cfg_.nfm.epsilon)) {
      (void)r;
      data[i].labels.push_back(label);
    }
    read[i] = {items[i].image_path, rpath, sidecar(rpath), hpath, sidecar(hpath), cue("edges", items[i].id)};
  });
  add_inputs(read);
  NfmTrainConfig tc;
  tc.hidden_dim = cfg_.nfm.hidden_dim;
  tc.sgd = cfg_.nfm.sgd;
  tc.max_epochs = cfg_.nfm.max_epochs;
  tc.seed = cfg_.seed;
  NfmTrainReport report;
  const int input_dim = static_cast<int>(region_feature_dim(cfg_.nfm.bins_per_channel));
  const MlpParameters params = train_nfm(data, input_dim, table_.size(), tc, &report);
  const fs::path out = dir(Stage::kNfmTrain) / "params.bin";
  save_mlp_parameters(params, out);
  write_text(dir(Stage::kNfmTrain) / "losses.json", json(report.step_losses).dump() + "\n");
  outputs_ = {out, dir(Stage::kNfmTrain) / "losses.json"};
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu steps, final batch loss %.4f", report.step_losses.size(),
                report.step_losses.empty() ? 0.0 : report.step_losses.back());
  return {Stage::kNfmTrain, items.size(), buf, std::nullopt, std::nullopt};
}

std::vector<RoundItem> Runner::round_items(const std::vector<Item>& items, bool need_heuristic, bool need_edges,
                                           bool need_scores, std::vector<std::vector<fs::path>>* read) {
  std::vector<RoundItem> out(items.size());
  read->assign(items.size(), {});
  parallel_for(items.size(), cfg_.jobs, [&](std::size_t i) {
    RoundItem& r = out[i];
    r.id = items[i].id;
    r.image = load_image(items[i]);
    const fs::path rpath = dir(Stage::kRegions) / (items[i].id + ".png");
    r.regions = load_region_map(rpath);
    r.y = LabelSet({items[i].category}, table_);
    (*read)[i] = {items[i].image_path, rpath, sidecar(rpath)};
    if (need_heuristic) {
      const fs::path hpath = dir(Stage::kHeuristic) / (items[i].id + ".png");
      r.heuristic = load_heuristic_map(hpath);
      (*read)[i].insert((*read)[i].end(), {hpath, sidecar(hpath)});
    }
    if (need_edges) {
      r.edges = load_cue("edges", items[i].id, r.image.width(), r.image.height());
      (*read)[i].push_back(cue("edges", items[i].id));
    }
    if (need_scores) {
      const fs::path spath = scores_dir() / (items[i].id + ".scores");
      need(spath);
      r.scores = load_score_map(spath);
      (*read)[i].push_back(spath);
    }
  });
  return out;
}

StageReport Runner::nfm_filter() {
  const auto items = accepted_items();
  require_stage(Stage::kRegions);
  require_stage(Stage::kHeuristic);
  std::optional<MlpParameters> params;
  if (cfg_.nfm.enabled) {
    require_stage(Stage::kNfmTrain);
    params = load_mlp_parameters(dir(Stage::kNfmTrain) / "params.bin");
    inputs_.push_back(dir(Stage::kNfmTrain) / "params.bin");
  }
  std::vector<std::vector<fs::path>> read;
  const auto round = round_items(items, true, cfg_.nfm.enabled, false, &read);
  add_inputs(read);
  fs::create_directories(dir(Stage::kNfmFilter) / "masks");
  std::vector<std::vector<fs::path>> wrote(items.size());
  std::vector<std::size_t> ignored(items.size(), 0);
  parallel_for(items.size(), cfg_.jobs, [&](std::size_t i) {
    const std::vector<RoundItem> one{round[i]};
    const RoundResult res = run_round(one, 1, cfg_.nfm.enabled, params ? &*params : nullptr, cfg_.refine,
                                      cfg_.nfm.bins_per_channel);
    const fs::path out = dir(Stage::kNfmFilter) / (items[i].id + ".png");
    const fs::path mask = dir(Stage::kNfmFilter) / "masks" / (items[i].id + ".png");
    save_heuristic_map(res.heuristics[0], out);
    save_mask(targets_to_mask(res.heuristics[0]), mask);
    for (auto v : res.heuristics[0].ignore) ignored[i] += v;
    wrote[i] = {out, sidecar(out), mask};
  });
  add_outputs(wrote);
  std::size_t total = 0;
  for (auto v : ignored) total += v;
  return {Stage::kNfmFilter, items.size(),
          std::string(cfg_.nfm.enabled ? "NFM on" : "NFM off") + ", " + std::to_string(total) + " pixels ignored",
          std::nullopt, std::nullopt};
}

StageReport Runner::ssm() {
  const auto items = accepted_items();
  require_stage(Stage::kNfmFilter);
  std::vector<RasterImage> images(items.size());
  std::vector<HeuristicMap> targets(items.size());
  std::vector<std::vector<fs::path>> read(items.size());
  parallel_for(items.size(), cfg_.jobs, [&](std::size_t i) {
    images[i] = load_image(items[i]);
    const fs::path hpath = dir(Stage::kNfmFilter) / (items[i].id + ".png");
    targets[i] = load_heuristic_map(hpath);
    read[i] = {items[i].image_path, hpath, sidecar(hpath)};
  });
  add_inputs(read);
  if (items.empty()) throw MissingInput("ssm: no accepted images");
  const SsmModel model = fit_ssm(images, targets, table_.num_labels(), cfg_.ssm);
  save_ssm_model(model, dir(Stage::kSsm) / "model.json");
  std::vector<std::string> names{table_.name_of(0)};
  names.insert(names.end(), table_.names().begin(), table_.names().end());
  std::vector<std::vector<fs::path>> wrote(items.size());
  parallel_for(items.size(), cfg_.jobs, [&](std::size_t i) {
    const fs::path out = dir(Stage::kSsm) / (items[i].id + ".scores");
    save_score_map(ssm_predict(model, images[i]), names, out);
    wrote[i] = {out};
  });
  outputs_.push_back(dir(Stage::kSsm) / "model.json");
  add_outputs(wrote);
  return {Stage::kSsm, items.size(), std::to_string(items.size()) + " score maps", std::nullopt, std::nullopt};
}

StageReport Runner::refine() {
  const auto items = accepted_items();
  require_stage(Stage::kRegions);
  if (cfg_.scores_dir.empty()) require_stage(Stage::kSsm);
  std::vector<std::vector<fs::path>> read;
  const auto round = round_items(items, false, false, true, &read);
  add_inputs(read);
  std::vector<std::vector<fs::path>> wrote(items.size());
  parallel_for(items.size(), cfg_.jobs, [&](std::size_t i) {
    const std::vector<RoundItem> one{round[i]};
    const RoundResult res = run_round(one, 2, false, nullptr, cfg_.refine);
    const fs::path out = dir(Stage::kRefine) / (items[i].id + ".png");
    save_mask(res.masks[0], out);
    wrote[i] = {out};
  });
  add_outputs(wrote);
  return {Stage::kRefine, items.size(), std::to_string(items.size()) + " masks", std::nullopt, std::nullopt};
}

StageReport Runner::eval() {
  const auto items = accepted_items();
  require_stage(Stage::kNfmFilter);
  const bool refined = fs::exists(dir(Stage::kRefine) / "digests.json");
  if (refined) require_stage(Stage::kRefine);
  std::vector<std::string> ids;
  for (const auto& it : items) {
    ids.push_back(it.id);
    inputs_.push_back(source() / "gt" / (it.id + ".png"));
    inputs_.push_back(dir(Stage::kNfmFilter) / "masks" / (it.id + ".png"));
    if (refined) inputs_.push_back(dir(Stage::kRefine) / (it.id + ".png"));
  }
  const auto report = [&](const fs::path& pred, const std::string& stem) {
    const IouReport rep = iou_report(evaluate_directories(pred, source() / "gt", table_, &ids, cfg_.jobs));
    const fs::path csv = dir(Stage::kEval) / (stem + ".csv"), txt = dir(Stage::kEval) / (stem + ".txt");
    write_text(csv, format_report_csv(rep, table_));
    write_text(txt, format_report_text(rep, table_));
    outputs_.push_back(csv);
    outputs_.push_back(txt);
    return rep;
  };
  StageReport r{Stage::kEval, items.size(), "", std::nullopt, std::nullopt};
  r.target_iou = report(dir(Stage::kNfmFilter) / "masks", "targets_report");
  char buf[128];
  std::snprintf(buf, sizeof buf, "targets mIoU %.4f", r.target_iou->mean.value_or(0.0));
  r.summary = buf;
  if (refined) {
    r.iou = report(dir(Stage::kRefine), "report");
    std::snprintf(buf, sizeof buf, ", refined mIoU %.4f", r.iou->mean.value_or(0.0));
    r.summary += buf;
  }
  r.summary += " over " + std::to_string(items.size()) + " images";
  return r;
}

}  // namespace

ConfusionMatrix evaluate_directories(const fs::path& pred_dir, const fs::path& gt_dir, const CategoryTable& table,
                                     const std::vector<std::string>* ids, int jobs) {
  std::vector<std::string> names;
  if (ids) {
    names = *ids;
  } else {
    if (!fs::is_directory(gt_dir)) throw MissingInput("ground-truth directory " + gt_dir.string() + " not found");
    for (const auto& e : fs::directory_iterator(gt_dir)) {
      if (e.path().extension() == ".png") names.push_back(e.path().stem().string());
    }
    std::sort(names.begin(), names.end());
  }
  std::vector<ConfusionMatrix> parts(names.size(), ConfusionMatrix(table.num_labels()));
  parallel_for(names.size(), jobs, [&](std::size_t i) {
    const fs::path p = pred_dir / (names[i] + ".png"), g = gt_dir / (names[i] + ".png");
    if (!fs::exists(p)) throw MissingInput("missing prediction " + p.string());
    if (!fs::exists(g)) throw MissingInput("missing ground truth " + g.string());
    accumulate(parts[i], load_mask(p), load_mask(g));
  });
  ConfusionMatrix cm(table.num_labels());
  for (const auto& part : parts) cm.merge(part);
  return cm;
}

std::vector<StageReport> run_pipeline(const PipelineConfig& config, const std::vector<Stage>& stages) {
  config.validate();
  std::set<Stage> wanted(stages.begin(), stages.end());
  fs::create_directories(config.workdir);
  Runner runner(config);
  std::vector<StageReport> reports;
  for (Stage s : all_stages()) {
    if (wanted.count(s)) reports.push_back(runner.run(s));
  }
  return reports;
}

}  // namespace proxyforge
