#pragma once

// Keyword-driven image acquisition and the line-delimited JSON manifest
// shared by the later stages.

#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "proxyforge/qfilter.hpp"

namespace proxyforge {

struct ManifestEntry {
  std::string keyword;
  std::string url;
  std::string local_path;  ///< relative to the manifest's directory
  std::string content_hash;
  std::string status = "fetched";  ///< "fetched" or "rejected"
  std::string reason;              ///< set when rejected
  std::optional<QualityVerdict> quality;

  bool fetched() const { return status == "fetched"; }
  /// First 16 hex digits of the content hash; names per-image artifacts.
  std::string image_id() const { return content_hash.substr(0, 16); }
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

using CrawlManifest = std::vector<ManifestEntry>;

std::string to_json_line(const ManifestEntry& entry);
ManifestEntry entry_from_json_line(const std::string& line);

/// Missing file ⇒ empty manifest. A final line without a newline that fails
/// to parse is treated as a torn write and dropped.
CrawlManifest read_manifest(const std::filesystem::path& path);
/// Atomic rewrite through a temporary file.
void write_manifest(const CrawlManifest& manifest, const std::filesystem::path& path);

/// Serialized appender: one flushed line per entry.
class ManifestWriter {
 public:
  explicit ManifestWriter(const std::filesystem::path& path);
  void append(const ManifestEntry& entry);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

struct CrawlConfig {
  /// Search URL with {keyword} and {limit} placeholders.
  std::string endpoint_template;
  int limit = 2000;
  std::filesystem::path out_dir;
  int workers = 8;
  int max_retries = 4;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{30};
  /// Bearer credential; empty sends no Authorization header.
  std::string token;
};

/// Environment variable read for CrawlConfig::token by the CLI.
inline constexpr const char* kTokenEnvVar = "PROXYFORGE_API_TOKEN";

/// Fetches up to `limit` images for the keyword in endpoint rank order into
/// out_dir/images/<keyword>/, appending to out_dir/manifest.jsonl. Entries
/// already in the manifest count toward the limit and their hashes are not
/// stored again. Returns this keyword's entries (old and new). Throws
/// AuthError on 401/403 and NetworkError when the search itself fails.
CrawlManifest crawl_keyword(const std::string& keyword, const CrawlConfig& config);

/// Union deduplicated by content hash (failed downloads by keyword and url),
/// ordered by keyword then hash. Two entries with one hash but different
/// local paths raise InvalidArgument.
CrawlManifest merge_manifests(const std::vector<CrawlManifest>& parts);

}  // namespace proxyforge
