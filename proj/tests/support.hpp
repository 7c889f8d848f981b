#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "proxyforge/core.hpp"

namespace pftest {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "pf") {
    std::random_device rd;
    for (;;) {
      path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
      if (fs::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline proxyforge::RasterImage random_image(std::mt19937_64& rng, int w, int h, int channels) {
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * channels);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : data) v = static_cast<std::uint8_t>(d(rng));
  return proxyforge::RasterImage(w, h, channels, std::move(data));
}

inline proxyforge::ProbabilityMap random_map(std::mt19937_64& rng, int w, int h) {
  std::vector<double> data(static_cast<std::size_t>(w) * h);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (auto& v : data) v = d(rng);
  return proxyforge::ProbabilityMap(w, h, std::move(data));
}

inline double uniform(std::mt19937_64& rng, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int a, int b) {
  return std::uniform_int_distribution<int>(a, b)(rng);
}

}  // namespace pftest

namespace pftest {

/// Every regular file under `root`, keyed by generic relative path, with its bytes.
inline std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).generic_string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return out;
}

}  // namespace pftest
