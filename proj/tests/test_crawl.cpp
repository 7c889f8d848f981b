#include <doctest.h>

#include <atomic>
#include <fstream>
#include <map>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "proxyforge/crawl.hpp"
#include "proxyforge/digest.hpp"
#include "support.hpp"

using namespace proxyforge;
using pftest::TempDir;

namespace {

/// Local search service: /search?q=<kw> lists /img/<kw>/<i> for the
/// configured images; /img serves their bytes.
class FakeService {
 public:
  std::map<std::string, std::vector<std::string>> images;  // keyword -> bodies in rank order
  std::atomic<int> throttle_remaining{0};                  // 429s before any success
  std::atomic<int> requests{0};
  std::string required_token;
  std::vector<int> broken;  // image indices answering 404

  FakeService() {
    server_.Get("/search", [this](const httplib::Request& req, httplib::Response& res) {
      if (!gate(req, res)) return;
      const std::string kw = req.get_param_value("q");
      nlohmann::json results = nlohmann::json::array();
      const auto& list = images[kw];
      for (std::size_t i = 0; i < list.size(); ++i) {
        results.push_back({{"url", base() + "/img/" + kw + "/" + std::to_string(i)}});
      }
      res.set_content(nlohmann::json{{"results", results}}.dump(), "application/json");
    });
    server_.Get(R"(/img/([^/]+)/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (!gate(req, res)) return;
      const int i = std::stoi(req.matches[2]);
      if (std::find(broken.begin(), broken.end(), i) != broken.end()) {
        res.status = 404;
        return;
      }
      res.set_content(images[req.matches[1]].at(static_cast<std::size_t>(i)), "application/octet-stream");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeService() {
    server_.stop();
    thread_.join();
  }

  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::string endpoint() const { return base() + "/search?q={keyword}&n={limit}"; }

 private:
  bool gate(const httplib::Request& req, httplib::Response& res) {
    ++requests;
    if (!required_token.empty() && req.get_header_value("Authorization") != "Bearer " + required_token) {
      res.status = 401;
      return false;
    }
    if (throttle_remaining.fetch_sub(1) > 0) {
      res.status = 429;
      return false;
    }
    return true;
  }

  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

CrawlConfig config_for(const FakeService& svc, const TempDir& dir) {
  CrawlConfig c;
  c.endpoint_template = svc.endpoint();
  c.out_dir = dir.path();
  c.limit = 100;
  c.workers = 3;
  c.max_retries = 3;
  c.initial_backoff = std::chrono::milliseconds(1);
  c.timeout = std::chrono::seconds(5);
  return c;
}

std::string body(int i) { return "P5\n1 1\n255\n" + std::string(1, static_cast<char>(i)); }

}  // namespace

TEST_CASE("five images with one duplicate give four manifest entries") {
  FakeService svc;
  svc.images["cat"] = {body(1), body(2), body(1), body(3), body(4)};
  TempDir dir;
  const CrawlManifest m = crawl_keyword("cat", config_for(svc, dir));
  REQUIRE(m.size() == 4);
  std::set<std::string> hashes;
  for (const auto& e : m) {
    CHECK(e.fetched());
    CHECK(e.keyword == "cat");
    hashes.insert(e.content_hash);
    std::ifstream in(dir.path() / e.local_path, std::ios::binary);
    const std::string stored((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(sha256_hex(stored) == e.content_hash);
    CHECK(e.local_path.rfind("images/cat/" + e.image_id() + ".pgm", 0) == 0);
  }
  CHECK(hashes.size() == 4);
  CHECK(m[0].url.find("/img/cat/0") != std::string::npos);
  CHECK(m[2].url.find("/img/cat/3") != std::string::npos);  // rank order kept
  CHECK(read_manifest(dir / "manifest.jsonl") == m);
}

TEST_CASE("limit caps stored images and a rerun fetches nothing new") {
  FakeService svc;
  svc.images["dog"] = {body(1), body(2), body(3), body(4), body(5)};
  TempDir dir;
  CrawlConfig cfg = config_for(svc, dir);
  cfg.limit = 2;
  CHECK(crawl_keyword("dog", cfg).size() == 2);
  const int before = svc.requests;
  CHECK(crawl_keyword("dog", cfg).size() == 2);
  CHECK(svc.requests == before);

  cfg.limit = 4;
  const CrawlManifest more = crawl_keyword("dog", cfg);
  CHECK(more.size() == 4);
  CHECK(read_manifest(dir / "manifest.jsonl").size() == 4);

  cfg.limit = 0;
  CHECK_THROWS_AS(crawl_keyword("dog", cfg), InvalidArgument);
}

TEST_CASE("throttling is retried") {
  FakeService svc;
  svc.images["owl"] = {body(7)};
  svc.throttle_remaining = 2;
  TempDir dir;
  CHECK(crawl_keyword("owl", config_for(svc, dir)).size() == 1);

  svc.throttle_remaining = 100;
  TempDir again;
  CHECK_THROWS_AS(crawl_keyword("owl", config_for(svc, again)), NetworkError);
}

TEST_CASE("credentials") {
  FakeService svc;
  svc.images["fox"] = {body(9)};
  svc.required_token = "s3cret";
  TempDir dir;
  CrawlConfig cfg = config_for(svc, dir);
  CHECK_THROWS_AS(crawl_keyword("fox", cfg), AuthError);
  cfg.token = "wrong";
  CHECK_THROWS_AS(crawl_keyword("fox", cfg), AuthError);
  cfg.token = "s3cret";
  CHECK(crawl_keyword("fox", cfg).size() == 1);
}

TEST_CASE("failed downloads are recorded as rejected and not retried later") {
  FakeService svc;
  svc.images["elk"] = {body(1), body(2), body(3)};
  svc.broken = {1};
  TempDir dir;
  const CrawlManifest m = crawl_keyword("elk", config_for(svc, dir));
  REQUIRE(m.size() == 3);
  CHECK(m[1].status == "rejected");
  CHECK(m[1].reason.find("404") != std::string::npos);
  CHECK(m[1].content_hash.empty());
  svc.broken.clear();
  CHECK(crawl_keyword("elk", config_for(svc, dir)).size() == 3);
}

TEST_CASE("unreachable and malformed endpoints") {
  TempDir dir;
  CrawlConfig cfg;
  cfg.out_dir = dir.path();
  cfg.max_retries = 0;
  cfg.timeout = std::chrono::seconds(1);
  cfg.endpoint_template = "http://127.0.0.1:1/search?q={keyword}";
  CHECK_THROWS_AS(crawl_keyword("x", cfg), NetworkError);
  cfg.endpoint_template = "ftp://example/{keyword}";
  CHECK_THROWS_AS(crawl_keyword("x", cfg), InvalidArgument);
}

TEST_CASE("manifest lines round trip and torn tails are dropped") {
  ManifestEntry a;
  a.keyword = "bird";
  a.url = "http://x/1";
  a.local_path = "images/bird/abc.png";
  a.content_hash = std::string(64, 'a');
  a.quality = QualityVerdict{123.5, 40, 60, true, RejectReason::kNone};
  CHECK(entry_from_json_line(to_json_line(a)) == a);
  ManifestEntry b = a;
  b.url = "http://x/2";
  b.status = "rejected";
  b.reason = "download_failed: HTTP 500";
  b.content_hash.clear();
  b.local_path.clear();
  b.quality.reset();
  CHECK(entry_from_json_line(to_json_line(b)) == b);
  CHECK_THROWS_AS(entry_from_json_line("{not json"), FormatError);

  TempDir dir;
  const auto path = dir / "manifest.jsonl";
  CHECK(read_manifest(path).empty());
  write_manifest({a, b}, path);
  CHECK(read_manifest(path) == CrawlManifest{a, b});
  std::ofstream(path, std::ios::app) << R"({"keyword":"bi)";
  CHECK(read_manifest(path) == CrawlManifest{a, b});
  {
    ManifestWriter w(path);
    ManifestEntry c = a;
    c.content_hash = std::string(64, 'c');
    w.append(c);
  }
  CHECK(read_manifest(path).size() == 3);

  // A malformed line in the middle is an error, not a torn write.
  std::ofstream(path, std::ios::trunc) << to_json_line(a) << "\n{bad\n" << to_json_line(b) << "\n";
  CHECK_THROWS_AS(read_manifest(path), FormatError);
}

TEST_CASE("merge is a set union keyed by content hash") {
  ManifestEntry a;
  a.keyword = "cow";
  a.url = "u1";
  a.content_hash = std::string(64, '1');
  a.local_path = "images/cow/1.png";
  ManifestEntry b = a;
  b.url = "u2";
  b.content_hash = std::string(64, '2');
  b.local_path = "images/cow/2.png";
  ManifestEntry c = a;
  c.keyword = "ant";
  c.content_hash = std::string(64, '3');
  c.local_path = "images/ant/3.png";
  ManifestEntry failed;
  failed.keyword = "cow";
  failed.url = "u9";
  failed.status = "rejected";

  const CrawlManifest merged = merge_manifests({{a, b, failed}, {b, c, failed}, {}});
  CHECK(merged == CrawlManifest{c, failed, a, b});
  CHECK(merge_manifests({{b, a}, {c}}) == merge_manifests({{c}, {a, b}}));
  CHECK(merge_manifests({merged, merged}) == merged);

  ManifestEntry clash = a;
  clash.local_path = "elsewhere.png";
  CHECK_THROWS_AS(merge_manifests({{a}, {clash}}), InvalidArgument);
}
