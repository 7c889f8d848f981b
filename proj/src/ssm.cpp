#include "proxyforge/ssm.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "proxyforge/color.hpp"
#include "proxyforge/refine.hpp"

namespace proxyforge {

SsmModel SsmModel::zeros(int bins_per_channel, int channels) {
  if (bins_per_channel < 2 || bins_per_channel > 256 || channels < 2) {
    throw InvalidArgument("SsmModel: bad dimensions");
  }
  SsmModel m;
  m.bins_per_channel = bins_per_channel;
  m.channels = channels;
  m.weights.assign(static_cast<std::size_t>(bins_per_channel) * bins_per_channel * bins_per_channel * channels, 0.0);
  m.bias.assign(static_cast<std::size_t>(channels), 0.0);
  return m;
}

ScoreMap ssm_predict(const SsmModel& model, const RasterImage& image) {
  ScoreMap s(image.width(), image.height(), model.channels);
  for (std::size_t p = 0; p < s.pixel_count(); ++p) {
    const std::size_t bin = static_cast<std::size_t>(pixel_bin(image, p, model.bins_per_channel));
    double* out = s.pixel(p);
    for (int c = 0; c < model.channels; ++c) out[c] = model.weights[bin * model.channels + c] + model.bias[c];
  }
  return s;
}

namespace {

void check_pairs(std::span<const RasterImage> images, std::span<const HeuristicMap> heuristics) {
  if (images.size() != heuristics.size() || images.empty()) {
    throw InvalidArgument("ssm: need one heuristic map per image");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].width() != heuristics[i].width || images[i].height() != heuristics[i].height) {
      throw InvalidArgument("ssm: image and heuristic map sizes differ");
    }
  }
}

double weight_penalty(const SsmModel& model, double l2, SsmModel* grad) {
  double reg = 0.0;
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    reg += model.weights[k] * model.weights[k];
    if (grad) grad->weights[k] += l2 * model.weights[k];
  }
  return 0.5 * l2 * reg;
}

}  // namespace

double ssm_objective(const SsmModel& model, std::span<const RasterImage> images,
                     std::span<const HeuristicMap> heuristics, double l2, SsmModel* grad) {
  check_pairs(images, heuristics);
  SsmModel g = SsmModel::zeros(model.bins_per_channel, model.channels);
  double loss = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ScoreMap scores = ssm_predict(model, images[i]);
    const auto lg = heuristic_loss(scores, heuristics[i]);
    loss += lg.loss;
    for (std::size_t p = 0; p < scores.pixel_count(); ++p) {
      if (heuristics[i].ignore[p]) continue;
      ++count;
      const std::size_t bin = static_cast<std::size_t>(pixel_bin(images[i], p, model.bins_per_channel));
      const double* gp = lg.grad.pixel(p);
      for (int c = 0; c < model.channels; ++c) {
        g.weights[bin * model.channels + c] += gp[c];
        g.bias[c] += gp[c];
      }
    }
  }
  const double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
  for (double& v : g.weights) v *= inv;
  for (double& v : g.bias) v *= inv;
  const double value = loss * inv + weight_penalty(model, l2, &g);
  if (grad) *grad = std::move(g);
  return value;
}

SsmStatistics collect_ssm_statistics(std::span<const RasterImage> images, std::span<const HeuristicMap> heuristics,
                                     int bins_per_channel, int channels) {
  check_pairs(images, heuristics);
  SsmStatistics st;
  st.bins_per_channel = bins_per_channel;
  st.channels = channels;
  const std::size_t bins = static_cast<std::size_t>(bins_per_channel) * bins_per_channel * bins_per_channel;
  st.counts.assign(bins, 0.0);
  st.targets.assign(bins * channels, 0.0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const HeuristicMap& h = heuristics[i];
    if (h.category < 1 || h.category >= channels) throw InvalidArgument("ssm: category has no score channel");
    for (std::size_t p = 0; p < h.pixel_count(); ++p) {
      if (h.ignore[p]) continue;
      const std::size_t bin = static_cast<std::size_t>(pixel_bin(images[i], p, bins_per_channel));
      st.counts[bin] += 1.0;
      st.targets[bin * channels] += 1.0 - h.fg_prob[p];
      st.targets[bin * channels + h.category] += h.fg_prob[p];
      st.total += 1.0;
    }
  }
  return st;
}

double ssm_objective(const SsmModel& model, const SsmStatistics& st, double l2, SsmModel* grad) {
  if (model.channels != st.channels || model.bins_per_channel != st.bins_per_channel) {
    throw InvalidArgument("ssm: model and statistics disagree");
  }
  SsmModel g = SsmModel::zeros(model.bins_per_channel, model.channels);
  const int ch = model.channels;
  std::vector<double> s(static_cast<std::size_t>(ch));
  double loss = 0.0;
  for (std::size_t b = 0; b < st.counts.size(); ++b) {
    const double n = st.counts[b];
    if (n == 0.0) continue;
    double mx = -INFINITY;
    for (int c = 0; c < ch; ++c) {
      s[c] = model.weights[b * ch + c] + model.bias[c];
      mx = std::max(mx, s[c]);
    }
    double z = 0.0;
    for (int c = 0; c < ch; ++c) z += std::exp(s[c] - mx);
    const double log_z = mx + std::log(z);
    for (int c = 0; c < ch; ++c) {
      const double t = st.targets[b * ch + c];
      loss += t * (log_z - s[c]);
      const double d = n * std::exp(s[c] - log_z) - t;
      g.weights[b * ch + c] += d;
      g.bias[c] += d;
    }
  }
  const double inv = st.total > 0.0 ? 1.0 / st.total : 0.0;
  for (double& v : g.weights) v *= inv;
  for (double& v : g.bias) v *= inv;
  const double value = loss * inv + weight_penalty(model, l2, &g);
  if (grad) *grad = std::move(g);
  return value;
}

SsmModel fit_ssm(std::span<const RasterImage> images, std::span<const HeuristicMap> heuristics, int channels,
                 const SsmConfig& config) {
  const SsmStatistics st = collect_ssm_statistics(images, heuristics, config.bins_per_channel, channels);
  SsmModel model = SsmModel::zeros(config.bins_per_channel, channels);
  // Adam over the concatenated parameter vector [weights, bias].
  const std::size_t nw = model.weights.size(), n = nw + model.bias.size();
  std::vector<double> m(n, 0.0), v(n, 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  SsmModel grad;
  for (int it = 1; it <= config.iterations; ++it) {
    ssm_objective(model, st, config.l2, &grad);
    const double c1 = 1.0 - std::pow(kBeta1, it), c2 = 1.0 - std::pow(kBeta2, it);
    for (std::size_t k = 0; k < n; ++k) {
      double& param = k < nw ? model.weights[k] : model.bias[k - nw];
      const double g = k < nw ? grad.weights[k] : grad.bias[k - nw];
      m[k] = kBeta1 * m[k] + (1 - kBeta1) * g;
      v[k] = kBeta2 * v[k] + (1 - kBeta2) * g * g;
      param -= config.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + kEps);
    }
  }
  return model;
}

void save_ssm_model(const SsmModel& model, const std::filesystem::path& path) {
  nlohmann::json j{{"bins_per_channel", model.bins_per_channel},
                   {"channels", model.channels},
                   {"weights", model.weights},
                   {"bias", model.bias}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
}

SsmModel load_ssm_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFile("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    SsmModel m = SsmModel::zeros(j.at("bins_per_channel").get<int>(), j.at("channels").get<int>());
    auto w = j.at("weights").get<std::vector<double>>();
    auto b = j.at("bias").get<std::vector<double>>();
    if (w.size() != m.weights.size() || b.size() != m.bias.size()) throw FormatError(path.string() + ": size mismatch");
    m.weights = std::move(w);
    m.bias = std::move(b);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace proxyforge
