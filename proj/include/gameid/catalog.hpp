#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "gameid/image.hpp"

namespace gameid {

struct SystemId {
  std::string provider_id;
  std::string display_name;

  bool operator==(const SystemId&) const = default;
};

struct ScreenshotRecord {
  std::string screenshot_id;
  std::string game_id;
  std::string image_uri;
  int width = 0;   // 0 = unreported
  int height = 0;

  bool operator==(const ScreenshotRecord&) const = default;
};

struct GameRecord {
  std::string game_id;
  std::string title;
  SystemId system;
  std::vector<ScreenshotRecord> screenshots;

  bool operator==(const GameRecord&) const = default;
};

struct GamePage {
  long total = 0;
  std::vector<GameRecord> games;
};

// Minimum-interval limiter: at most rps calls begin in any one-second
// half-open window, shared by every thread of a fetch run.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second);
  void acquire();

 private:
  std::chrono::steady_clock::duration interval_;
  std::chrono::steady_clock::time_point next_allowed_;
  std::mutex mu_;
};

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string content_type;
};

// get() takes a canonical path+query (sorted keys, no credentials); the
// transport supplies credentials and the wire mechanics.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse get(const std::string& canonical_path) = 0;
};

std::unique_ptr<Transport> make_http_transport(const std::string& base_url,
                                               const std::string& api_key);

// Replays recorded request->response sequences from a fixture directory.
// Format: fixture.json {"version":1,"responses":{<canonical_path>:[entry...]}}
// where entry is {"status":N} plus either "json": <inline body> or
// "body_file": <relative path>. A sequence is consumed in order; its last
// entry repeats. Every call is appended to the visible log.
class FixtureTransport : public Transport {
 public:
  explicit FixtureTransport(const std::filesystem::path& dir);
  HttpResponse get(const std::string& canonical_path) override;

  struct Call {
    std::string path;
    std::chrono::steady_clock::time_point at;
  };
  const std::vector<Call>& calls() const { return calls_; }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::vector<HttpResponse>> responses_;
  std::map<std::string, std::size_t> cursor_;
  std::vector<Call> calls_;
  std::mutex mu_;
};

// Provider adapter: one concrete implementation parses the wire schema over
// any Transport, so recorded fixtures exercise the same parsing, paging and
// retry logic as the live endpoint.
class CatalogProvider {
 public:
  virtual ~CatalogProvider() = default;
  virtual std::vector<SystemId> list_systems() = 0;
  virtual GamePage list_games(const SystemId& system, long offset, long limit) = 0;
  virtual std::vector<ScreenshotRecord> list_screenshots(const SystemId& system,
                                                         const std::string& game_id) = 0;
  virtual ImageBlob fetch_image(const ScreenshotRecord& record) = 0;
};

struct ProviderOptions {
  double requests_per_second = 1.0;
  int max_retries = 5;                    // for 429 and transient 5xx
  std::chrono::milliseconds backoff_base{250};  // doubled per retry
};

std::unique_ptr<CatalogProvider> make_api_provider(std::unique_ptr<Transport> transport,
                                                   const ProviderOptions& opts);
std::unique_ptr<CatalogProvider> make_fixture_provider(const std::filesystem::path& dir,
                                                       const ProviderOptions& opts);

// Append-only image cache:
//   <root>/<system>/<game_id>/<screenshot_id>.<ext> + index.json + skip_log.jsonl
class CatalogCache {
 public:
  explicit CatalogCache(std::filesystem::path root);

  bool has(const std::string& screenshot_id) const;
  ImageBlob read(const std::string& screenshot_id) const;  // verifies checksum
  std::filesystem::path path_of(const std::string& screenshot_id) const;
  void store(const SystemId& system, const ScreenshotRecord& record, const ImageBlob& bytes);
  void log_skip(const ScreenshotRecord& record, const std::string& reason);
  void flush_index() const;
  std::size_t size() const;
  void verify_integrity() const;  // recomputes every checksum

  const std::filesystem::path& root() const { return root_; }

 private:
  struct Entry {
    std::string relative_path;
    std::string sha256;
  };
  std::filesystem::path root_;
  std::map<std::string, Entry> entries_;
  mutable std::mutex mu_;

  void load_index();
};

// Paged metadata fetch: ceil(total/page_size) listing requests, rate limited.
std::vector<GameRecord> fetch_system_catalog(CatalogProvider& provider, const SystemId& system,
                                             long page_size);

// Cache-first image fetch. Misses are downloaded, checksummed and stored;
// a 404 is logged to the skip log and reported as not_found.
ImageBlob fetch_screenshot_image(CatalogProvider& provider, const ScreenshotRecord& record,
                                 const SystemId& system, CatalogCache& cache);

struct FetchOptions {
  long page_size = 100;
  int workers = 4;
};

struct FetchReport {
  std::size_t games = 0;
  std::size_t screenshots_listed = 0;
  std::size_t downloaded = 0;
  std::size_t cache_hits = 0;
  std::vector<std::string> skipped;  // screenshot ids
};

// Image downloads for an already-fetched catalog, on a bounded worker pool
// sharing the provider's rate limiter. 404s land in the skip log.
FetchReport fetch_images(CatalogProvider& provider, const SystemId& system,
                         const std::vector<GameRecord>& catalog, CatalogCache& cache,
                         int workers);

// Full fetch run for one system: catalog then images.
FetchReport fetch_system(CatalogProvider& provider, const SystemId& system, CatalogCache& cache,
                         const FetchOptions& opts);

// Shared by providers and fixture writers: sorted query string, credentials
// excluded.
std::string canonical_path(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& query);

// Filesystem-safe name for system/game/screenshot ids.
std::string sanitize_component(const std::string& s);

// Catalog listings persisted by a fetch run so curation can work offline.
void write_catalog_json(const std::vector<GameRecord>& catalog, const SystemId& system,
                        const std::filesystem::path& file);
std::vector<GameRecord> read_catalog_json(const std::filesystem::path& file, SystemId* system_out = nullptr);

}  // namespace gameid
