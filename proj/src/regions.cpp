#include "proxyforge/regions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <tuple>

#include <json.hpp>

#include "proxyforge/image_io.hpp"

namespace proxyforge {

namespace {

constexpr int kDx[4] = {1, -1, 0, 0};
constexpr int kDy[4] = {0, 0, 1, -1};

class DisjointSet {
 public:
  explicit DisjointSet(int n) : parent_(static_cast<std::size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  /// Keeps the smaller root so representatives are the smallest member id.
  int unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return a;
  }

 private:
  std::vector<int> parent_;
};

}  // namespace

// ---------------------------------------------------------------------------
// RegionMap

RegionMap RegionMap::from_labels(int width, int height, const std::vector<int>& labels) {
  if (width < 1 || height < 1 || labels.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("region labels do not match the given dimensions");
  }
  RegionMap m;
  m.width_ = width;
  m.height_ = height;
  m.ids_.resize(labels.size());
  std::map<int, int> remap;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.emplace(labels[i], static_cast<int>(remap.size()));
    m.ids_[i] = it->second;
  }
  m.finalize(true);
  return m;
}

RegionMap RegionMap::from_canonical_ids(int width, int height, std::vector<int> ids) {
  if (width < 1 || height < 1 || ids.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("region ids do not match the given dimensions");
  }
  RegionMap m;
  m.width_ = width;
  m.height_ = height;
  m.ids_ = std::move(ids);
  int next = 0;
  for (int id : m.ids_) {
    if (id < 0 || id > next) throw InvalidArgument("region ids are not canonical (raster first-appearance order)");
    if (id == next) ++next;
  }
  m.finalize(true);
  return m;
}

void RegionMap::finalize(bool check_connectivity) {
  const int count = ids_.empty() ? 0 : *std::max_element(ids_.begin(), ids_.end()) + 1;
  sizes_.assign(static_cast<std::size_t>(count), 0);
  for (int id : ids_) ++sizes_[static_cast<std::size_t>(id)];
  for (std::size_t s : sizes_) {
    if (s == 0) throw InvalidArgument("region ids are not contiguous");
  }
  std::vector<std::pair<int, int>> adj;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      const int a = id(x, y);
      if (x + 1 < width_ && id(x + 1, y) != a) adj.emplace_back(std::minmax(a, id(x + 1, y)));
      if (y + 1 < height_ && id(x, y + 1) != a) adj.emplace_back(std::minmax(a, id(x, y + 1)));
    }
  }
  std::sort(adj.begin(), adj.end());
  adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  adjacency_ = std::move(adj);

  if (!check_connectivity) return;
  // One flood fill per region from its first pixel must cover the region.
  std::vector<std::uint8_t> seen(ids_.size(), 0);
  std::vector<std::size_t> stack;
  std::vector<std::size_t> reached(sizes_.size(), 0);
  std::vector<std::uint8_t> started(sizes_.size(), 0);
  for (std::size_t p = 0; p < ids_.size(); ++p) {
    const int r = ids_[p];
    if (started[r]) continue;
    started[r] = 1;
    stack.push_back(p);
    seen[p] = 1;
    while (!stack.empty()) {
      const std::size_t q = stack.back();
      stack.pop_back();
      ++reached[r];
      const int qx = static_cast<int>(q % width_), qy = static_cast<int>(q / width_);
      for (int k = 0; k < 4; ++k) {
        const int nx = qx + kDx[k], ny = qy + kDy[k];
        if (nx < 0 || ny < 0 || nx >= width_ || ny >= height_) continue;
        const std::size_t n = static_cast<std::size_t>(ny) * width_ + nx;
        if (!seen[n] && ids_[n] == r) {
          seen[n] = 1;
          stack.push_back(n);
        }
      }
    }
    if (reached[r] != sizes_[r]) {
      throw InvalidArgument("region " + std::to_string(r) + " is not 4-connected");
    }
  }
}

std::vector<std::vector<std::size_t>> RegionMap::members() const {
  std::vector<std::vector<std::size_t>> out(sizes_.size());
  for (std::size_t r = 0; r < sizes_.size(); ++r) out[r].reserve(sizes_[r]);
  for (std::size_t p = 0; p < ids_.size(); ++p) out[static_cast<std::size_t>(ids_[p])].push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Watershed

RegionMap watershed_oversegment(const ProbabilityMap& edges) {
  const int w = edges.width(), h = edges.height();
  const std::size_t n = edges.size();
  std::vector<int> level(n);
  for (std::size_t i = 0; i < n; ++i) {
    level[i] = static_cast<int>(std::lround(std::clamp(edges[i], 0.0, 1.0) * 255.0));
  }

  // Regional minima: plateaus with no strictly lower 4-neighbor.
  std::vector<int> label(n, -1);
  std::vector<int> plateau(n, -1);
  std::vector<std::size_t> stack, members;
  int next_label = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (plateau[p] != -1) continue;
    const int lv = level[p];
    bool is_min = true;
    members.clear();
    stack.push_back(p);
    plateau[p] = static_cast<int>(p);
    while (!stack.empty()) {
      const std::size_t q = stack.back();
      stack.pop_back();
      members.push_back(q);
      const int qx = static_cast<int>(q % w), qy = static_cast<int>(q / w);
      for (int k = 0; k < 4; ++k) {
        const int nx = qx + kDx[k], ny = qy + kDy[k];
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const std::size_t m = static_cast<std::size_t>(ny) * w + nx;
        if (level[m] < lv) is_min = false;
        if (level[m] == lv && plateau[m] == -1) {
          plateau[m] = static_cast<int>(p);
          stack.push_back(m);
        }
      }
    }
    if (is_min) {
      for (std::size_t q : members) label[q] = next_label;
      ++next_label;
    }
  }

  // Priority flood, labelling on pop. (level, insertion order) gives a
  // deterministic FIFO among equal levels.
  using Entry = std::tuple<int, std::uint64_t, std::size_t, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  std::uint64_t order = 0;
  auto push_neighbors = [&](std::size_t p, int lv) {
    const int px = static_cast<int>(p % w), py = static_cast<int>(p / w);
    for (int k = 0; k < 4; ++k) {
      const int nx = px + kDx[k], ny = py + kDy[k];
      if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
      const std::size_t m = static_cast<std::size_t>(ny) * w + nx;
      if (label[m] < 0) queue.emplace(std::max(level[m], lv), order++, m, label[p]);
    }
  };
  for (std::size_t p = 0; p < n; ++p) {
    if (label[p] >= 0) push_neighbors(p, 0);
  }
  while (!queue.empty()) {
    const auto [lv, ord, p, l] = queue.top();
    queue.pop();
    if (label[p] >= 0) continue;
    label[p] = l;
    push_neighbors(p, lv);
  }
  return RegionMap::from_labels(w, h, label);
}

// ---------------------------------------------------------------------------
// UCM

namespace {

struct BoundaryStats {
  double sum = 0.0;
  double max = 0.0;
  std::size_t count = 0;
  std::vector<double> samples;  // only kept for the median

  void add(double v, bool keep) {
    sum += v;
    max = std::max(max, v);
    ++count;
    if (keep) samples.push_back(v);
  }
  void absorb(BoundaryStats&& other, bool keep) {
    sum += other.sum;
    max = std::max(max, other.max);
    count += other.count;
    if (keep) samples.insert(samples.end(), other.samples.begin(), other.samples.end());
  }
  double value(BoundaryStatistic s) const {
    switch (s) {
      case BoundaryStatistic::kMean: return sum / static_cast<double>(count);
      case BoundaryStatistic::kMax: return max;
      case BoundaryStatistic::kMedian: {
        std::vector<double> v = samples;
        const std::size_t mid = (v.size() - 1) / 2;
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
        return v[mid];
      }
    }
    return 0.0;
  }
};

}  // namespace

UcmHierarchy build_ucm(const RegionMap& base, const ProbabilityMap& edges, BoundaryStatistic statistic) {
  if (base.width() != edges.width() || base.height() != edges.height()) {
    throw InvalidArgument("build_ucm: region map and edge map sizes differ");
  }
  const bool keep = statistic == BoundaryStatistic::kMedian;
  const int w = base.width(), h = base.height();
  const int m = base.region_count();

  // Per-region neighbor table: neighbor representative -> boundary stats.
  std::vector<std::map<int, BoundaryStats>> nbr(static_cast<std::size_t>(m));
  auto add_pair = [&](int a, int b, double v) {
    if (a > b) std::swap(a, b);
    nbr[a][b].add(v, keep);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int a = base.id(x, y);
      if (x + 1 < w && base.id(x + 1, y) != a) {
        add_pair(a, base.id(x + 1, y), std::max(edges.at(x, y), edges.at(x + 1, y)));
      }
      if (y + 1 < h && base.id(x, y + 1) != a) {
        add_pair(a, base.id(x, y + 1), std::max(edges.at(x, y), edges.at(x, y + 1)));
      }
    }
  }
  // Mirror so that each live region sees all of its neighbors; stats are
  // owned by the smaller id of the pair.
  std::vector<std::vector<int>> links(static_cast<std::size_t>(m));
  for (int a = 0; a < m; ++a) {
    for (const auto& [b, st] : nbr[a]) {
      links[a].push_back(b);
      links[b].push_back(a);
    }
  }

  using Candidate = std::tuple<double, int, int>;  // strength, a, b (a < b)
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap;
  for (int a = 0; a < m; ++a) {
    for (const auto& [b, st] : nbr[a]) heap.emplace(st.value(statistic), a, b);
  }

  DisjointSet dsu(m);
  std::vector<std::uint8_t> alive(static_cast<std::size_t>(m), 1);
  UcmHierarchy out;
  out.base = base;
  double floor = 0.0;
  while (!heap.empty()) {
    auto [strength, a, b] = heap.top();
    heap.pop();
    if (!alive[a] || !alive[b]) continue;
    auto it = nbr[a].find(b);
    if (it == nbr[a].end()) continue;
    // Stale entry: the stats changed after this candidate was pushed.
    if (it->second.value(statistic) != strength) continue;

    floor = std::max(floor, strength);
    out.merge_tree.push_back({a, b, floor});
    // Merge b into a (a < b keeps the smallest-id representative).
    BoundaryStats dropped = std::move(it->second);
    nbr[a].erase(it);
    alive[b] = 0;
    dsu.unite(a, b);

    // Move every boundary of b onto a.
    std::vector<int> b_links;
    b_links.swap(links[b]);
    for (int c : b_links) {
      if (c == a || !alive[c]) continue;
      BoundaryStats st;
      if (b < c) {
        auto jt = nbr[b].find(c);
        if (jt == nbr[b].end()) continue;
        st = std::move(jt->second);
        nbr[b].erase(jt);
      } else {
        auto jt = nbr[c].find(b);
        if (jt == nbr[c].end()) continue;
        st = std::move(jt->second);
        nbr[c].erase(jt);
      }
      const int lo = std::min(a, c), hi = std::max(a, c);
      auto [slot, inserted] = nbr[lo].try_emplace(hi);
      slot->second.absorb(std::move(st), keep);
      if (inserted) {
        links[a].push_back(c);
        links[c].push_back(a);
      }
      heap.emplace(slot->second.value(statistic), lo, hi);
    }
    nbr[b].clear();
  }
  return out;
}

RegionMap cut_hierarchy(const UcmHierarchy& hierarchy, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw InvalidArgument("cut_hierarchy: threshold must be in [0, 1]");
  }
  const RegionMap& base = hierarchy.base;
  DisjointSet dsu(base.region_count());
  for (const MergeStep& s : hierarchy.merge_tree) {
    if (s.strength > threshold) break;  // strengths are non-decreasing
    dsu.unite(s.region_a, s.region_b);
  }
  std::vector<int> labels(base.pixel_count());
  for (std::size_t p = 0; p < labels.size(); ++p) labels[p] = dsu.find(base.id(p));
  return RegionMap::from_labels(base.width(), base.height(), labels);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& png_path) {
  auto p = png_path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void save_region_map(const RegionMap& regions, const std::filesystem::path& png_path) {
  if (regions.region_count() > 65536) throw InvalidArgument("too many regions for a 16-bit id map");
  Gray16Image img{regions.width(), regions.height(), {}};
  img.data.resize(regions.pixel_count());
  for (std::size_t p = 0; p < img.data.size(); ++p) img.data[p] = static_cast<std::uint16_t>(regions.id(p));
  save_png_gray16(img, png_path);

  nlohmann::json j;
  j["M"] = regions.region_count();
  j["width"] = regions.width();
  j["height"] = regions.height();
  j["sizes"] = regions.sizes();
  auto adj = nlohmann::json::array();
  for (const auto& [a, b] : regions.adjacency()) adj.push_back({a, b});
  j["adjacency"] = std::move(adj);
  std::ofstream out(sidecar_path(png_path));
  if (!out) throw IoError("cannot write " + sidecar_path(png_path).string());
  out << j.dump() << '\n';
}

RegionMap load_region_map(const std::filesystem::path& png_path) {
  Gray16Image img = load_png_gray16(png_path);
  std::vector<int> ids(img.data.begin(), img.data.end());
  RegionMap m = RegionMap::from_labels(img.width, img.height, ids);
  const auto side = sidecar_path(png_path);
  if (std::filesystem::exists(side)) {
    std::ifstream in(side);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(side.string() + ": " + e.what());
    }
    if (j.value("M", -1) != m.region_count()) {
      throw FormatError(side.string() + ": region count disagrees with the id map");
    }
  }
  return m;
}

}  // namespace proxyforge
