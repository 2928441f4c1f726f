#include "gameid/catalog.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "gameid/error.hpp"
#include "gameid/sha256.hpp"

// httplib is heavyweight; keep it out of headers.
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#endif

namespace gameid {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// RateLimiter
// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(double requests_per_second) {
  if (requests_per_second <= 0.0)
    raise(ErrorCode::invalid_argument, "rate limit must be positive");
  interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / requests_per_second));
  next_allowed_ = std::chrono::steady_clock::now();
}

void RateLimiter::acquire() {
  std::chrono::steady_clock::time_point wake;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    wake = std::max(now, next_allowed_);
    next_allowed_ = wake + interval_;
  }
  std::this_thread::sleep_until(wake);
}

// ---------------------------------------------------------------------------
// canonical path
// ---------------------------------------------------------------------------

std::string canonical_path(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& query) {
  auto sorted = query;
  std::sort(sorted.begin(), sorted.end());
  std::string out = path;
  char sep = '?';
  for (const auto& [k, v] : sorted) {
    if (k == "api_key") continue;
    out += sep;
    out += k;
    out += '=';
    out += v;
    sep = '&';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

namespace {

class HttpTransport : public Transport {
 public:
  HttpTransport(std::string base_url, std::string api_key)
      : base_url_(std::move(base_url)), api_key_(std::move(api_key)) {}

  HttpResponse get(const std::string& canonical) override {
    httplib::Client client(base_url_);
    client.set_connection_timeout(10);
    client.set_read_timeout(30);
    std::string target = canonical;
    if (!api_key_.empty()) {
      target += (target.find('?') == std::string::npos) ? '?' : '&';
      target += "api_key=" + api_key_;
    }
    auto res = client.Get(target);
    if (!res) raise(ErrorCode::provider_unavailable, "connection failed: " + base_url_ + canonical);
    HttpResponse out;
    out.status = res->status;
    out.body = res->body;
    out.content_type = res->get_header_value("Content-Type");
    return out;
  }

 private:
  std::string base_url_;
  std::string api_key_;
};

}  // namespace

std::unique_ptr<Transport> make_http_transport(const std::string& base_url,
                                               const std::string& api_key) {
  return std::make_unique<HttpTransport>(base_url, api_key);
}

FixtureTransport::FixtureTransport(const fs::path& dir) : dir_(dir) {
  std::ifstream in(dir / "fixture.json");
  if (!in) raise(ErrorCode::io_error, "missing fixture.json in " + dir.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(ErrorCode::malformed_response, std::string("fixture parse error: ") + e.what());
  }
  if (j.value("version", 0) != 1)
    raise(ErrorCode::schema_version_mismatch, "unsupported fixture version");
  for (auto& [path, seq] : j.at("responses").items()) {
    std::vector<HttpResponse> responses;
    for (auto& entry : seq) {
      HttpResponse r;
      r.status = entry.value("status", 200);
      if (entry.contains("json")) {
        r.body = entry["json"].dump();
        r.content_type = "application/json";
      } else if (entry.contains("body_file")) {
        const fs::path file = dir / entry["body_file"].get<std::string>();
        std::ifstream blob(file, std::ios::binary);
        if (!blob) raise(ErrorCode::io_error, "fixture body missing: " + file.string());
        std::ostringstream ss;
        ss << blob.rdbuf();
        r.body = ss.str();
        r.content_type = entry.value("content_type", "application/octet-stream");
      }
      responses.push_back(std::move(r));
    }
    if (responses.empty())
      raise(ErrorCode::malformed_response, "fixture sequence empty for " + path);
    responses_.emplace(path, std::move(responses));
  }
}

HttpResponse FixtureTransport::get(const std::string& canonical) {
  std::lock_guard lock(mu_);
  calls_.push_back({canonical, std::chrono::steady_clock::now()});
  auto it = responses_.find(canonical);
  if (it == responses_.end()) {
    HttpResponse r;
    r.status = 404;
    return r;
  }
  std::size_t& cur = cursor_[canonical];
  const auto& seq = it->second;
  const HttpResponse& r = seq[std::min(cur, seq.size() - 1)];
  ++cur;
  return r;
}

// ---------------------------------------------------------------------------
// ApiCatalogProvider — wire schema over any Transport
// ---------------------------------------------------------------------------

namespace {

class ApiCatalogProvider : public CatalogProvider {
 public:
  ApiCatalogProvider(std::unique_ptr<Transport> transport, const ProviderOptions& opts)
      : transport_(std::move(transport)), opts_(opts), limiter_(opts.requests_per_second) {}

  std::vector<SystemId> list_systems() override {
    const json j = get_json(canonical_path("/platforms", {}));
    std::vector<SystemId> out;
    for (const auto& p : expect_array(j, "platforms"))
      out.push_back({expect_string(p, "platform_id"), expect_string(p, "platform_name")});
    return out;
  }

  GamePage list_games(const SystemId& system, long offset, long limit) override {
    const json j = get_json(canonical_path(
        "/games", {{"platform", system.provider_id},
                   {"offset", std::to_string(offset)},
                   {"limit", std::to_string(limit)}}));
    GamePage page;
    if (!j.contains("total") || !j["total"].is_number())
      raise(ErrorCode::malformed_response, "games listing missing total");
    page.total = j["total"].get<long>();
    for (const auto& g : expect_array(j, "games")) {
      GameRecord game;
      game.game_id = expect_string(g, "game_id");
      game.title = expect_string(g, "title");
      game.system = system;
      if (g.contains("screenshots"))
        for (const auto& s : g["screenshots"]) game.screenshots.push_back(parse_shot(s, game.game_id));
      std::sort(game.screenshots.begin(), game.screenshots.end(),
                [](const auto& a, const auto& b) { return a.screenshot_id < b.screenshot_id; });
      check_no_duplicate_shots(game);
      page.games.push_back(std::move(game));
    }
    return page;
  }

  std::vector<ScreenshotRecord> list_screenshots(const SystemId& system,
                                                 const std::string& game_id) override {
    const json j = get_json(canonical_path("/games/" + game_id + "/screenshots",
                                           {{"platform", system.provider_id}}));
    std::vector<ScreenshotRecord> out;
    for (const auto& s : expect_array(j, "screenshots")) out.push_back(parse_shot(s, game_id));
    return out;
  }

  ImageBlob fetch_image(const ScreenshotRecord& record) override {
    const HttpResponse res = get_with_retries(record.image_uri);
    if (res.status == 404) raise(ErrorCode::not_found, "image not found: " + record.image_uri);
    if (res.status != 200)
      raise(ErrorCode::provider_unavailable,
            "image fetch failed with status " + std::to_string(res.status));
    return ImageBlob(res.body.begin(), res.body.end());
  }

 private:
  std::unique_ptr<Transport> transport_;
  ProviderOptions opts_;
  RateLimiter limiter_;

  static ScreenshotRecord parse_shot(const json& s, const std::string& game_id) {
    ScreenshotRecord r;
    r.screenshot_id = expect_string(s, "screenshot_id");
    r.game_id = game_id;
    r.image_uri = expect_string(s, "image_url");
    r.width = s.value("width", 0);
    r.height = s.value("height", 0);
    return r;
  }

  static void check_no_duplicate_shots(const GameRecord& game) {
    for (std::size_t i = 1; i < game.screenshots.size(); ++i)
      if (game.screenshots[i].screenshot_id == game.screenshots[i - 1].screenshot_id)
        raise(ErrorCode::malformed_response,
              "duplicate screenshot id " + game.screenshots[i].screenshot_id + " in game " +
                  game.game_id);
  }

  static const json& expect_array(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_array())
      raise(ErrorCode::malformed_response, std::string("missing array field: ") + key);
    return j[key];
  }

  static std::string expect_string(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string())
      raise(ErrorCode::malformed_response, std::string("missing string field: ") + key);
    return j[key].get<std::string>();
  }

  HttpResponse get_with_retries(const std::string& canonical) {
    auto delay = opts_.backoff_base;
    for (int attempt = 0;; ++attempt) {
      limiter_.acquire();
      HttpResponse res;
      bool transport_error = false;
      try {
        res = transport_->get(canonical);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::provider_unavailable) throw;
        transport_error = true;
      }
      const bool retryable = transport_error || res.status == 429 || res.status >= 500;
      if (!retryable) return res;
      if (attempt >= opts_.max_retries) {
        if (!transport_error && res.status == 429)
          raise(ErrorCode::rate_limited, "still rate limited after retries: " + canonical);
        raise(ErrorCode::provider_unavailable, "provider unavailable after retries: " + canonical);
      }
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }

  json get_json(const std::string& canonical) {
    const HttpResponse res = get_with_retries(canonical);
    if (res.status == 401 || res.status == 403)
      raise(ErrorCode::auth_rejected, "credentials rejected for " + canonical);
    if (res.status == 404) raise(ErrorCode::not_found, "no such resource: " + canonical);
    if (res.status != 200)
      raise(ErrorCode::provider_unavailable,
            "unexpected status " + std::to_string(res.status) + " for " + canonical);
    try {
      return json::parse(res.body);
    } catch (const json::exception& e) {
      raise(ErrorCode::malformed_response, std::string("response parse error: ") + e.what());
    }
  }
};

}  // namespace

std::unique_ptr<CatalogProvider> make_api_provider(std::unique_ptr<Transport> transport,
                                                   const ProviderOptions& opts) {
  return std::make_unique<ApiCatalogProvider>(std::move(transport), opts);
}

std::unique_ptr<CatalogProvider> make_fixture_provider(const fs::path& dir,
                                                       const ProviderOptions& opts) {
  return std::make_unique<ApiCatalogProvider>(std::make_unique<FixtureTransport>(dir), opts);
}

// ---------------------------------------------------------------------------
// CatalogCache
// ---------------------------------------------------------------------------

CatalogCache::CatalogCache(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
  load_index();
}

void CatalogCache::load_index() {
  const fs::path index = root_ / "index.json";
  if (!fs::exists(index)) return;
  std::ifstream in(index);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(ErrorCode::io_error, std::string("cache index parse error: ") + e.what());
  }
  if (j.value("version", 0) != 1)
    raise(ErrorCode::schema_version_mismatch, "unsupported cache index version");
  for (auto& [id, entry] : j.at("entries").items())
    entries_[id] = {entry.at("path").get<std::string>(), entry.at("sha256").get<std::string>()};
}

bool CatalogCache::has(const std::string& screenshot_id) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(screenshot_id);
  return it != entries_.end() && fs::exists(root_ / it->second.relative_path);
}

fs::path CatalogCache::path_of(const std::string& screenshot_id) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(screenshot_id);
  if (it == entries_.end())
    raise(ErrorCode::not_found, "screenshot not in cache: " + screenshot_id);
  return root_ / it->second.relative_path;
}

ImageBlob CatalogCache::read(const std::string& screenshot_id) const {
  Entry entry;
  {
    std::lock_guard lock(mu_);
    auto it = entries_.find(screenshot_id);
    if (it == entries_.end())
      raise(ErrorCode::not_found, "screenshot not in cache: " + screenshot_id);
    entry = it->second;
  }
  std::ifstream in(root_ / entry.relative_path, std::ios::binary);
  if (!in) raise(ErrorCode::not_found, "cached file missing: " + entry.relative_path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (sha256_hex(bytes) != entry.sha256)
    raise(ErrorCode::checksum_mismatch, "cache checksum mismatch for " + screenshot_id);
  return ImageBlob(bytes.begin(), bytes.end());
}

namespace {
std::string uri_extension(const std::string& uri) {
  const auto slash = uri.find_last_of('/');
  const auto dot = uri.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return "bin";
  std::string ext = uri.substr(dot + 1);
  const auto q = ext.find('?');
  if (q != std::string::npos) ext = ext.substr(0, q);
  return ext.empty() ? "bin" : ext;
}
}  // namespace

std::string sanitize_component(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "_" : out;
}

void CatalogCache::store(const SystemId& system, const ScreenshotRecord& record,
                         const ImageBlob& bytes) {
  const std::string rel = sanitize_component(system.provider_id) + "/" +
                          sanitize_component(record.game_id) + "/" +
                          sanitize_component(record.screenshot_id) + "." +
                          uri_extension(record.image_uri);
  const fs::path full = root_ / rel;
  fs::create_directories(full.parent_path());
  {
    std::ofstream out(full, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) raise(ErrorCode::io_error, "cannot write cache file " + full.string());
  }
  std::lock_guard lock(mu_);
  // append-only: an existing entry is never replaced during a run
  entries_.emplace(record.screenshot_id, Entry{rel, sha256_hex(bytes)});
}

void CatalogCache::log_skip(const ScreenshotRecord& record, const std::string& reason) {
  std::lock_guard lock(mu_);
  std::ofstream out(root_ / "skip_log.jsonl", std::ios::app);
  json j{{"screenshot_id", record.screenshot_id},
         {"game_id", record.game_id},
         {"image_uri", record.image_uri},
         {"reason", reason}};
  out << j.dump() << "\n";
}

void CatalogCache::flush_index() const {
  std::lock_guard lock(mu_);
  json entries = json::object();
  for (const auto& [id, entry] : entries_)
    entries[id] = {{"path", entry.relative_path}, {"sha256", entry.sha256}};
  json j{{"version", 1}, {"entries", entries}};
  std::ofstream out(root_ / "index.json", std::ios::trunc);
  out << j.dump(2) << "\n";
}

std::size_t CatalogCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void CatalogCache::verify_integrity() const {
  std::map<std::string, Entry> snapshot;
  {
    std::lock_guard lock(mu_);
    snapshot = entries_;
  }
  for (const auto& [id, entry] : snapshot) {
    const fs::path full = root_ / entry.relative_path;
    if (!fs::exists(full))
      raise(ErrorCode::checksum_mismatch, "cache entry file missing: " + entry.relative_path);
    if (sha256_file_hex(full) != entry.sha256)
      raise(ErrorCode::checksum_mismatch, "cache checksum mismatch for " + id);
  }
}

// ---------------------------------------------------------------------------
// Fetch operations
// ---------------------------------------------------------------------------

std::vector<GameRecord> fetch_system_catalog(CatalogProvider& provider, const SystemId& system,
                                             long page_size) {
  if (page_size <= 0) raise(ErrorCode::invalid_argument, "page_size must be positive");
  std::vector<GameRecord> out;
  long offset = 0;
  long total = -1;
  do {
    GamePage page = provider.list_games(system, offset, page_size);
    if (total < 0) total = page.total;
    for (auto& g : page.games) out.push_back(std::move(g));
    offset += page_size;
  } while (offset < total);
  return out;
}

ImageBlob fetch_screenshot_image(CatalogProvider& provider, const ScreenshotRecord& record,
                                 const SystemId& system, CatalogCache& cache) {
  if (cache.has(record.screenshot_id)) return cache.read(record.screenshot_id);
  ImageBlob blob;
  try {
    blob = provider.fetch_image(record);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::not_found) {
      cache.log_skip(record, "not_found");
    }
    throw;
  }
  cache.store(system, record, blob);
  return blob;
}

void write_catalog_json(const std::vector<GameRecord>& catalog, const SystemId& system,
                        const fs::path& file) {
  json games = json::array();
  for (const auto& g : catalog) {
    json shots = json::array();
    for (const auto& s : g.screenshots)
      shots.push_back({{"screenshot_id", s.screenshot_id},
                       {"image_url", s.image_uri},
                       {"width", s.width},
                       {"height", s.height}});
    games.push_back({{"game_id", g.game_id}, {"title", g.title}, {"screenshots", shots}});
  }
  json j{{"version", 1},
         {"system", {{"provider_id", system.provider_id}, {"display_name", system.display_name}}},
         {"games", games}};
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) raise(ErrorCode::io_error, "cannot write catalog " + file.string());
  out << j.dump() << "\n";
}

std::vector<GameRecord> read_catalog_json(const fs::path& file, SystemId* system_out) {
  std::ifstream in(file);
  if (!in) raise(ErrorCode::io_error, "cannot open catalog " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(ErrorCode::malformed_response, std::string("catalog parse error: ") + e.what());
  }
  if (j.value("version", 0) != 1)
    raise(ErrorCode::schema_version_mismatch, "unsupported catalog file version");
  SystemId system{j.at("system").at("provider_id").get<std::string>(),
                  j.at("system").at("display_name").get<std::string>()};
  if (system_out) *system_out = system;
  std::vector<GameRecord> out;
  for (const auto& g : j.at("games")) {
    GameRecord game;
    game.game_id = g.at("game_id").get<std::string>();
    game.title = g.at("title").get<std::string>();
    game.system = system;
    for (const auto& s : g.at("screenshots"))
      game.screenshots.push_back({s.at("screenshot_id").get<std::string>(), game.game_id,
                                  s.at("image_url").get<std::string>(), s.value("width", 0),
                                  s.value("height", 0)});
    out.push_back(std::move(game));
  }
  return out;
}

FetchReport fetch_images(CatalogProvider& provider, const SystemId& system,
                         const std::vector<GameRecord>& catalog, CatalogCache& cache,
                         int worker_count) {
  FetchReport report;
  report.games = catalog.size();

  std::vector<std::pair<const GameRecord*, const ScreenshotRecord*>> work;
  for (const auto& game : catalog)
    for (const auto& shot : game.screenshots) work.emplace_back(&game, &shot);
  report.screenshots_listed = work.size();

  std::atomic<std::size_t> cursor{0};
  std::mutex report_mu;
  const int workers = std::max(1, worker_count);
  std::vector<std::thread> pool;
  std::exception_ptr first_error;

  auto run = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= work.size()) return;
      const ScreenshotRecord& shot = *work[i].second;
      const bool hit = cache.has(shot.screenshot_id);
      try {
        fetch_screenshot_image(provider, shot, system, cache);
        std::lock_guard lock(report_mu);
        if (hit)
          ++report.cache_hits;
        else
          ++report.downloaded;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::not_found) {
          std::lock_guard lock(report_mu);
          report.skipped.push_back(shot.screenshot_id);
          continue;
        }
        std::lock_guard lock(report_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  for (int i = 0; i < workers; ++i) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  cache.flush_index();
  return report;
}

FetchReport fetch_system(CatalogProvider& provider, const SystemId& system, CatalogCache& cache,
                         const FetchOptions& opts) {
  const auto catalog = fetch_system_catalog(provider, system, opts.page_size);
  return fetch_images(provider, system, catalog, cache, opts.workers);
}

}  // namespace gameid
