#include "proxyforge/label_maps.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "proxyforge/image_io.hpp"

namespace proxyforge {

ScoreMap::ScoreMap(int w, int h, int c, double fill) : width(w), height(h), channels(c) {
  if (w < 1 || h < 1 || c < 1) throw InvalidArgument("score map dimensions must be positive");
  data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

namespace {
constexpr char kScoreMagic[4] = {'P', 'F', 'S', 'M'};
}

void save_score_map(const ScoreMap& scores, const std::vector<std::string>& label_names,
                    const std::filesystem::path& path) {
  if (!label_names.empty() && label_names.size() != static_cast<std::size_t>(scores.channels)) {
    throw InvalidArgument("save_score_map: label names do not match channel count");
  }
  nlohmann::json h{{"width", scores.width}, {"height", scores.height}, {"channels", scores.channels},
                   {"labels", label_names}};
  const std::string header = h.dump();
  std::vector<float> payload(scores.data.size());
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (!std::isfinite(scores.data[i])) throw NumericError("save_score_map: non-finite score");
    payload[i] = static_cast<float>(scores.data[i]);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint32_t len = static_cast<std::uint32_t>(header.size());
  out.write(kScoreMagic, 4);
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(header.data(), len);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw IoError("write failed for " + path.string());
}

ScoreMap load_score_map(const std::filesystem::path& path, std::vector<std::string>* label_names) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFile("cannot open " + path.string());
  char magic[4];
  std::uint32_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&len), 4);
  if (!in || std::memcmp(magic, kScoreMagic, 4) != 0 || len > (1u << 20)) {
    throw CorruptHeader(path.string() + ": not a score map");
  }
  std::string header(len, '\0');
  in.read(header.data(), len);
  int w = 0, h = 0, c = 0;
  std::vector<std::string> names;
  try {
    const auto j = nlohmann::json::parse(header);
    w = j.at("width").get<int>();
    h = j.at("height").get<int>();
    c = j.at("channels").get<int>();
    names = j.value("labels", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeader(path.string() + ": " + e.what());
  }
  if (w < 1 || h < 1 || c < 1 || static_cast<std::size_t>(w) * h * c > (1u << 30)) {
    throw CorruptHeader(path.string() + ": implausible dimensions");
  }
  ScoreMap s(w, h, c);
  std::vector<float> payload(s.data.size());
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != payload.size() * sizeof(float)) {
    throw FormatError(path.string() + ": truncated score payload");
  }
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (!std::isfinite(payload[i])) throw FormatError(path.string() + ": non-finite score");
    s.data[i] = payload[i];
  }
  if (label_names) *label_names = std::move(names);
  return s;
}

void save_mask(const SegmentationMask& mask, const std::filesystem::path& path) {
  const auto palette = voc_palette();
  save_png_indexed(IndexedImage{mask.width, mask.height, mask.labels}, palette, path);
}

SegmentationMask load_mask(const std::filesystem::path& path) {
  IndexedImage img = load_png_indexed(path);
  SegmentationMask m;
  m.width = img.width;
  m.height = img.height;
  m.labels = std::move(img.indices);
  return m;
}

}  // namespace proxyforge
