#include "proxyforge/nfm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "proxyforge/color.hpp"
#include "proxyforge/kernels.hpp"

namespace proxyforge {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::vector<RegionFeatures> extract_region_features(const RasterImage& image, const RegionMap& regions,
                                                    const HeuristicMap& heuristic,
                                                    const ProbabilityMap& edges, int bins_per_channel) {
  const int w = regions.width(), h = regions.height();
  if (image.width() != w || image.height() != h || heuristic.width != w || heuristic.height != h ||
      edges.width() != w || edges.height() != h) {
    throw InvalidArgument("extract_region_features: maps do not share dimensions");
  }
  const std::size_t m = static_cast<std::size_t>(regions.region_count());
  const std::size_t hist_dim = region_feature_dim(bins_per_channel) - 5;
  std::vector<RegionFeatures> out(m, RegionFeatures(region_feature_dim(bins_per_channel), 0.0));
  std::vector<double> sx(m, 0.0), sy(m, 0.0), sfg(m, 0.0), sedge(m, 0.0);
  std::vector<std::size_t> nedge(m, 0);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const std::size_t r = static_cast<std::size_t>(regions.id(p));
      out[r][static_cast<std::size_t>(pixel_bin(image, p, bins_per_channel))] += 1.0;
      sx[r] += x;
      sy[r] += y;
      sfg[r] += heuristic.fg_prob[p];
      const bool boundary = (x > 0 && regions.id(x - 1, y) != static_cast<int>(r)) ||
                            (x + 1 < w && regions.id(x + 1, y) != static_cast<int>(r)) ||
                            (y > 0 && regions.id(x, y - 1) != static_cast<int>(r)) ||
                            (y + 1 < h && regions.id(x, y + 1) != static_cast<int>(r));
      if (boundary) {
        sedge[r] += edges[p];
        ++nedge[r];
      }
    }
  }
  const double total = static_cast<double>(w) * h;
  for (std::size_t r = 0; r < m; ++r) {
    const double n = static_cast<double>(regions.sizes()[r]);
    RegionFeatures& f = out[r];
    for (std::size_t b = 0; b < hist_dim; ++b) f[b] /= n;
    f[hist_dim + 0] = (sx[r] / n + 0.5) / w;
    f[hist_dim + 1] = (sy[r] / n + 0.5) / h;
    f[hist_dim + 2] = n / total;
    f[hist_dim + 3] = sfg[r] / n;
    f[hist_dim + 4] = nedge[r] ? sedge[r] / static_cast<double>(nedge[r]) : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// MLP

MlpParameters MlpParameters::zeros(int input_dim, int hidden_dim, int num_classes) {
  if (input_dim < 1 || hidden_dim < 1 || num_classes < 1) {
    throw InvalidArgument("MLP dimensions must be positive");
  }
  MlpParameters p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.num_classes = num_classes;
  p.w1.assign(static_cast<std::size_t>(input_dim) * hidden_dim, 0.0);
  p.b1.assign(static_cast<std::size_t>(hidden_dim), 0.0);
  p.w2.assign(static_cast<std::size_t>(num_classes) * hidden_dim, 0.0);
  p.b2.assign(static_cast<std::size_t>(num_classes), 0.0);
  return p;
}

MlpParameters MlpParameters::initialize(int input_dim, int hidden_dim, int num_classes, std::uint64_t seed) {
  MlpParameters p = zeros(input_dim, hidden_dim, num_classes);
  p.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n1(0.0, std::sqrt(2.0 / input_dim));
  for (double& v : p.w1) v = n1(rng);
  std::normal_distribution<double> n2(0.0, std::sqrt(1.0 / hidden_dim));
  for (double& v : p.w2) v = n2(rng);
  return p;
}

namespace {

void check_dims(const MlpParameters& p, std::size_t feature_len) {
  if (feature_len != static_cast<std::size_t>(p.input_dim)) {
    throw InvalidArgument("feature length " + std::to_string(feature_len) + " does not match MLP input " +
                          std::to_string(p.input_dim));
  }
  if (p.w1.size() != static_cast<std::size_t>(p.input_dim) * p.hidden_dim ||
      p.b1.size() != static_cast<std::size_t>(p.hidden_dim) ||
      p.w2.size() != static_cast<std::size_t>(p.num_classes) * p.hidden_dim ||
      p.b2.size() != static_cast<std::size_t>(p.num_classes)) {
    throw InvalidArgument("MLP parameter buffers are inconsistent with their dimensions");
  }
}

// Hidden pre-activations and scores for one input.
void forward(const MlpParameters& p, std::span<const double> x, std::vector<double>& pre,
             std::vector<double>& hidden, std::vector<double>& scores) {
  const auto& k = kernels::active();
  const std::size_t hd = static_cast<std::size_t>(p.hidden_dim);
  pre.assign(p.b1.begin(), p.b1.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0) k.axpy_f64(x[i], p.w1.data() + i * hd, pre.data(), hd);
  }
  hidden = pre;
  k.relu_f64(hidden.data(), hd);
  scores.resize(static_cast<std::size_t>(p.num_classes));
  for (int c = 0; c < p.num_classes; ++c) {
    scores[c] = p.b2[c] + k.dot_f64(p.w2.data() + static_cast<std::size_t>(c) * hd, hidden.data(), hd);
  }
}

}  // namespace

RegionPrediction mlp_forward(const MlpParameters& params, std::span<const double> features) {
  check_dims(params, features.size());
  std::vector<double> pre, hidden;
  RegionPrediction out;
  forward(params, features, pre, hidden, out.scores);
  const auto best = std::max_element(out.scores.begin(), out.scores.end());  // first max wins
  out.label = static_cast<int>(best - out.scores.begin()) + 1;
  return out;
}

MomentumState MomentumState::for_params(const MlpParameters& p) {
  MomentumState s;
  s.w1.assign(p.w1.size(), 0.0);
  s.b1.assign(p.b1.size(), 0.0);
  s.w2.assign(p.w2.size(), 0.0);
  s.b2.assign(p.b2.size(), 0.0);
  return s;
}

double nfm_loss_and_gradient(const MlpParameters& params, std::span<const LabeledRegion> batch,
                             MlpParameters* grad) {
  if (batch.empty()) throw InvalidArgument("nfm: empty batch");
  const auto& k = kernels::active();
  const std::size_t hd = static_cast<std::size_t>(params.hidden_dim);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  if (grad) *grad = MlpParameters::zeros(params.input_dim, params.hidden_dim, params.num_classes);

  std::vector<double> pre, hidden, scores, dscore(static_cast<std::size_t>(params.num_classes)), dh(hd);
  double loss = 0.0;
  for (const LabeledRegion& item : batch) {
    check_dims(params, item.features.size());
    if (item.label < 1 || item.label > params.num_classes) {
      throw InvalidArgument("nfm: training label " + std::to_string(item.label) + " outside 1.." +
                            std::to_string(params.num_classes));
    }
    forward(params, item.features, pre, hidden, scores);
    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double s : scores) z += std::exp(s - mx);
    const double log_z = mx + std::log(z);
    const std::size_t target = static_cast<std::size_t>(item.label - 1);
    loss += (log_z - scores[target]) * inv_n;
    if (!grad) continue;

    for (std::size_t c = 0; c < scores.size(); ++c) {
      dscore[c] = (std::exp(scores[c] - log_z) - (c == target ? 1.0 : 0.0)) * inv_n;
    }
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t c = 0; c < scores.size(); ++c) {
      grad->b2[c] += dscore[c];
      k.axpy_f64(dscore[c], hidden.data(), grad->w2.data() + c * hd, hd);
      k.axpy_f64(dscore[c], params.w2.data() + c * hd, dh.data(), hd);
    }
    for (std::size_t j = 0; j < hd; ++j) {
      if (pre[j] <= 0.0) dh[j] = 0.0;
      grad->b1[j] += dh[j];
    }
    for (std::size_t i = 0; i < item.features.size(); ++i) {
      if (item.features[i] != 0.0) k.axpy_f64(item.features[i], dh.data(), grad->w1.data() + i * hd, hd);
    }
  }
  return loss;
}

namespace {

void momentum_update(std::vector<double>& w, std::vector<double>& v, const std::vector<double>& g, double lr,
                     double momentum, double decay) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    v[i] = momentum * v[i] - lr * (g[i] + decay * w[i]);
    w[i] += v[i];
  }
}

}  // namespace

double nfm_train_step(MlpParameters& params, MomentumState& state, std::span<const LabeledRegion> batch,
                      const SgdConfig& config) {
  if (batch.empty()) throw InvalidArgument("nfm_train_step: empty batch");
  if (state.w1.size() != params.w1.size() || state.w2.size() != params.w2.size()) {
    throw InvalidArgument("nfm_train_step: momentum state does not match parameters");
  }
  MlpParameters grad;
  const double loss = nfm_loss_and_gradient(params, batch, &grad);
  if (!std::isfinite(loss)) throw NumericError("nfm_train_step: non-finite loss, step rejected");
  const double lr_hidden = config.base_lr * config.multipliers.hidden;
  const double lr_output = config.base_lr * config.multipliers.output;
  momentum_update(params.w1, state.w1, grad.w1, lr_hidden, config.momentum, config.weight_decay);
  momentum_update(params.b1, state.b1, grad.b1, lr_hidden, config.momentum, 0.0);
  momentum_update(params.w2, state.w2, grad.w2, lr_output, config.momentum, config.weight_decay);
  momentum_update(params.b2, state.b2, grad.b2, lr_output, config.momentum, 0.0);
  ++params.step_count;
  return loss;
}

// ---------------------------------------------------------------------------
// Region labels and filtering

namespace {

std::vector<double> region_sums(const HeuristicMap& heuristic, const RegionMap& regions) {
  if (heuristic.width != regions.width() || heuristic.height != regions.height()) {
    throw InvalidArgument("heuristic and region map sizes differ");
  }
  std::vector<double> sums(static_cast<std::size_t>(regions.region_count()), 0.0);
  for (std::size_t p = 0; p < heuristic.pixel_count(); ++p) {
    sums[static_cast<std::size_t>(regions.id(p))] += heuristic.fg_prob[p];
  }
  return sums;
}

}  // namespace

std::vector<std::pair<int, int>> label_regions_for_training(const HeuristicMap& heuristic,
                                                            const RegionMap& regions, const LabelSet& y,
                                                            double epsilon) {
  if (!y.contains(heuristic.category)) {
    throw InvalidArgument("heuristic category " + std::to_string(heuristic.category) + " is not in y");
  }
  const auto sums = region_sums(heuristic, regions);
  std::vector<std::pair<int, int>> out;
  out.reserve(sums.size());
  for (std::size_t r = 0; r < sums.size(); ++r) {
    out.emplace_back(static_cast<int>(r), sums[r] > epsilon ? heuristic.category : CategoryTable::kIgnoreId);
  }
  return out;
}

HeuristicMap filter_noise(const HeuristicMap& heuristic, const RegionMap& regions,
                          std::span<const std::optional<RegionPrediction>> predictions, const LabelSet& y,
                          double epsilon) {
  const auto sums = region_sums(heuristic, regions);
  if (predictions.size() != sums.size()) {
    throw ContractViolation("filter_noise: expected one prediction slot per region");
  }
  std::vector<std::uint8_t> drop(sums.size(), 0);
  for (std::size_t r = 0; r < sums.size(); ++r) {
    if (!(sums[r] > epsilon)) continue;
    if (!predictions[r]) {
      throw ContractViolation("filter_noise: missing prediction for foreground region " + std::to_string(r));
    }
    drop[r] = y.contains(predictions[r]->label) ? 0 : 1;
  }
  HeuristicMap out = heuristic;
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    if (drop[static_cast<std::size_t>(regions.id(p))]) out.ignore[p] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training driver

MlpParameters train_nfm(std::span<const NfmImage> images, int input_dim, int num_classes,
                        const NfmTrainConfig& config, NfmTrainReport* report) {
  MlpParameters params = MlpParameters::initialize(input_dim, config.hidden_dim, num_classes, config.seed);
  MomentumState state = MomentumState::for_params(params);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LabeledRegion> batch;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    // Fisher-Yates over raw rng() draws.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    }
    for (std::size_t idx : order) {
      const NfmImage& img = images[idx];
      batch.clear();
      for (std::size_t r = 0; r < img.features.size(); ++r) {
        const int label = img.labels[r];
        if (label == CategoryTable::kIgnoreId) continue;
        batch.push_back({img.features[r], label});
      }
      if (batch.empty()) continue;
      const double loss = nfm_train_step(params, state, batch, config.sgd);
      if (report) report->step_losses.push_back(loss);
    }
  }
  return params;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[4] = {'P', 'F', 'N', 'M'};

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != v.size() * sizeof(double)) {
    throw FormatError(path.string() + ": truncated parameter payload");
  }
}

}  // namespace

void save_mlp_parameters(const MlpParameters& p, const std::filesystem::path& path) {
  nlohmann::json h;
  h["input_dim"] = p.input_dim;
  h["hidden_dim"] = p.hidden_dim;
  h["num_classes"] = p.num_classes;
  h["seed"] = p.seed;
  h["step_count"] = p.step_count;
  h["layout"] = "w1[input][hidden], b1[hidden], w2[class][hidden], b2[class]; float64 LE";
  const std::string header = h.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 4);
  const std::uint32_t len = static_cast<std::uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_doubles(out, p.w1);
  write_doubles(out, p.b1);
  write_doubles(out, p.w2);
  write_doubles(out, p.b2);
  if (!out) throw IoError("write failed for " + path.string());
}

MlpParameters load_mlp_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFile("cannot open " + path.string());
  char magic[4];
  std::uint32_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&len), 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0 || len > (1u << 20)) {
    throw CorruptHeader(path.string() + ": not an NFM parameter file");
  }
  std::string header(len, '\0');
  in.read(header.data(), len);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeader(path.string() + ": " + e.what());
  }
  MlpParameters p = MlpParameters::zeros(h.at("input_dim").get<int>(), h.at("hidden_dim").get<int>(),
                                         h.at("num_classes").get<int>());
  p.seed = h.at("seed").get<std::uint64_t>();
  p.step_count = h.at("step_count").get<std::uint64_t>();
  read_doubles(in, p.w1, path);
  read_doubles(in, p.b1, path);
  read_doubles(in, p.w2, path);
  read_doubles(in, p.b2, path);
  return p;
}

}  // namespace proxyforge
