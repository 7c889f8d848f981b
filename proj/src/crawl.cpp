#include <httplib.h>

#include "proxyforge/crawl.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "proxyforge/digest.hpp"

namespace proxyforge {

using nlohmann::json;

std::string to_json_line(const ManifestEntry& e) {
  json j{{"keyword", e.keyword}, {"url", e.url}, {"local_path", e.local_path},
         {"content_hash", e.content_hash}, {"status", e.status}};
  if (!e.reason.empty()) j["reason"] = e.reason;
  if (e.quality) {
    j["quality"] = {{"blur_score", e.quality->blur_score},
                    {"mean_sat", e.quality->mean_sat},
                    {"mean_val", e.quality->mean_val},
                    {"accepted", e.quality->accepted},
                    {"reason", to_string(e.quality->reason)}};
  }
  return j.dump();
}

ManifestEntry entry_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest line: ") + e.what());
  }
  ManifestEntry e;
  e.keyword = j.at("keyword").get<std::string>();
  e.url = j.value("url", "");
  e.local_path = j.value("local_path", "");
  e.content_hash = j.value("content_hash", "");
  e.status = j.value("status", "fetched");
  e.reason = j.value("reason", "");
  if (e.status != "fetched" && e.status != "rejected") throw FormatError("unknown manifest status " + e.status);
  if (j.contains("quality")) {
    const auto& q = j["quality"];
    QualityVerdict v;
    v.blur_score = q.at("blur_score").get<double>();
    v.mean_sat = q.at("mean_sat").get<double>();
    v.mean_val = q.at("mean_val").get<double>();
    v.accepted = q.at("accepted").get<bool>();
    v.reason = reject_reason_from_string(q.at("reason").get<std::string>());
    e.quality = v;
  }
  return e;
}

CrawlManifest read_manifest(const std::filesystem::path& path) {
  CrawlManifest out;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) return out;
    throw UnreadableFile("cannot open " + path.string());
  }
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const std::string line = text.substr(pos, terminated ? nl - pos : std::string::npos);
    pos = terminated ? nl + 1 : text.size();
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(entry_from_json_line(line));
    } catch (const std::exception& e) {
      if (!terminated) break;  // torn final write
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const CrawlManifest& manifest, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    for (const auto& e : manifest) out << to_json_line(e) << '\n';
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ManifestWriter::ManifestWriter(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Repair a torn final line before appending.
  if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
    std::ifstream in(path, std::ios::binary);
    in.seekg(-1, std::ios::end);
    char last = 0;
    in.get(last);
    if (last != '\n') write_manifest(read_manifest(path), path);
  }
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw IoError("cannot append to " + path.string());
}

void ManifestWriter::append(const ManifestEntry& entry) {
  const std::string line = to_json_line(entry) + "\n";
  std::lock_guard lock(mu_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw IoError("manifest append failed");
}

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string target;  // path and query
};

Url split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/?#]+)([^#]*))", std::regex::icase);
  std::smatch m;
  if (!std::regex_search(url, m, re)) throw InvalidArgument("not an http(s) URL: " + url);
  Url u{m[1].str(), m[2].str()};
  if (u.target.empty()) u.target = "/";
  return u;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string extension_for(const std::string& body) {
  const auto starts = [&](std::string_view magic) { return body.compare(0, magic.size(), magic) == 0; };
  if (starts("\x89PNG")) return "png";
  if (starts("\xFF\xD8\xFF")) return "jpg";
  if (starts("GIF8")) return "gif";
  if (starts("P5") || starts("P2")) return "pgm";
  if (starts("P6") || starts("P3")) return "ppm";
  return "bin";
}

struct Fetch {
  bool ok = false;
  std::string body;
  std::string error;
};

class Fetcher {
 public:
  explicit Fetcher(const CrawlConfig& cfg) : cfg_(cfg) {}

  // Retries 429, 5xx and transport errors with exponential backoff.
  Fetch get(const std::string& url) const {
    const Url u = split_url(url);
    std::string last_error;
    auto backoff = cfg_.initial_backoff;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      httplib::Client client(u.origin);
      client.set_follow_location(true);
      client.set_connection_timeout(cfg_.timeout);
      client.set_read_timeout(cfg_.timeout);
      httplib::Headers headers;
      if (!cfg_.token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.token);
      auto res = client.Get(u.target, headers);
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 401 || res->status == 403) {
        throw AuthError(url + ": HTTP " + std::to_string(res->status));
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) return {false, {}, "HTTP " + std::to_string(res->status)};
      return {true, std::move(res->body), {}};
    }
    return {false, {}, last_error};
  }

 private:
  const CrawlConfig& cfg_;
};

std::string safe_component(const std::string& keyword) {
  std::string out;
  for (unsigned char c : keyword) out += (std::isalnum(c) || c == '-' || c == '_') ? static_cast<char>(c) : '_';
  if (out.empty()) throw InvalidArgument("empty keyword");
  return out;
}

}  // namespace

CrawlManifest crawl_keyword(const std::string& keyword, const CrawlConfig& config) {
  if (config.limit < 1) throw InvalidArgument("crawl: limit must be at least 1");
  if (config.workers < 1) throw InvalidArgument("crawl: workers must be at least 1");
  if (config.endpoint_template.empty()) throw InvalidArgument("crawl: no endpoint configured");

  const auto manifest_path = config.out_dir / "manifest.jsonl";
  const CrawlManifest existing = read_manifest(manifest_path);
  std::set<std::string> known_hashes;
  std::set<std::string> known_urls;
  CrawlManifest mine;
  int fetched = 0;
  for (const auto& e : existing) {
    if (e.fetched()) known_hashes.insert(e.content_hash);
    if (e.keyword != keyword) continue;
    known_urls.insert(e.url);
    mine.push_back(e);
    if (e.fetched()) ++fetched;
  }
  if (fetched >= config.limit) return mine;

  const Fetcher fetcher(config);
  std::string search = replace_all(config.endpoint_template, "{keyword}", httplib::detail::encode_query_param(keyword));
  search = replace_all(search, "{limit}", std::to_string(config.limit));
  const Fetch listing = fetcher.get(search);
  if (!listing.ok) throw NetworkError("search request failed for '" + keyword + "': " + listing.error);

  std::vector<std::string> urls;
  try {
    const json listing_json = json::parse(listing.body);
    for (const auto& r : listing_json.at("results")) urls.push_back(r.at("url").get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError("search response for '" + keyword + "' is malformed: " + e.what());
  }
  urls.erase(std::remove_if(urls.begin(), urls.end(), [&](const std::string& u) { return known_urls.count(u) > 0; }),
             urls.end());

  const std::string dir_name = safe_component(keyword);
  std::filesystem::create_directories(config.out_dir / "images" / dir_name);
  ManifestWriter writer(manifest_path);

  // Download in waves sized to the remaining quota; commit in rank order.
  std::size_t next = 0;
  while (fetched < config.limit && next < urls.size()) {
    const std::size_t wave = std::min(urls.size() - next, static_cast<std::size_t>(config.limit - fetched));
    std::vector<Fetch> results(wave);
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    const int threads = static_cast<int>(std::min<std::size_t>(wave, static_cast<std::size_t>(config.workers)));
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = cursor.fetch_add(1)) < wave;) {
          try {
            results[i] = fetcher.get(urls[next + i]);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    for (std::size_t i = 0; i < wave && fetched < config.limit; ++i) {
      ManifestEntry e;
      e.keyword = keyword;
      e.url = urls[next + i];
      if (!results[i].ok) {
        e.status = "rejected";
        e.reason = "download_failed: " + results[i].error;
      } else {
        e.content_hash = sha256_hex(results[i].body);
        if (!known_hashes.insert(e.content_hash).second) continue;
        e.local_path = "images/" + dir_name + "/" + e.image_id() + "." + extension_for(results[i].body);
        std::ofstream out(config.out_dir / e.local_path, std::ios::binary | std::ios::trunc);
        out.write(results[i].body.data(), static_cast<std::streamsize>(results[i].body.size()));
        if (!out) throw IoError("cannot write " + (config.out_dir / e.local_path).string());
        ++fetched;
      }
      writer.append(e);
      mine.push_back(e);
    }
    next += wave;
  }
  return mine;
}

CrawlManifest merge_manifests(const std::vector<CrawlManifest>& parts) {
  std::map<std::string, ManifestEntry> by_key;
  for (const auto& part : parts) {
    for (const auto& e : part) {
      const std::string key = e.content_hash.empty() ? "url\n" + e.keyword + "\n" + e.url : e.content_hash;
      auto [it, inserted] = by_key.emplace(key, e);
      if (!inserted && it->second.local_path != e.local_path) {
        throw InvalidArgument("merge_manifests: hash " + e.content_hash + " stored at both " +
                              it->second.local_path + " and " + e.local_path);
      }
    }
  }
  CrawlManifest out;
  out.reserve(by_key.size());
  for (auto& [key, e] : by_key) out.push_back(std::move(e));
  std::stable_sort(out.begin(), out.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    return std::tie(a.keyword, a.content_hash, a.url) < std::tie(b.keyword, b.content_hash, b.url);
  });
  return out;
}

}  // namespace proxyforge
