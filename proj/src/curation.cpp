#include "gameid/curation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "gameid/error.hpp"
#include "gameid/rng.hpp"

namespace gameid {

using nlohmann::json;

std::size_t CuratedSet::total_screenshots() const {
  std::size_t n = 0;
  for (const auto& g : games) n += g.screenshots.size();
  return n;
}

CuratedSet select_games(const std::vector<GameRecord>& catalog, const CurationRule& rule) {
  if (rule.min_screenshots < 1)
    raise(ErrorCode::invalid_argument, "min_screenshots must be positive");
  CuratedSet out;
  if (!catalog.empty()) out.system = catalog.front().system;
  for (const auto& game : catalog) {
    if (static_cast<int>(game.screenshots.size()) < rule.min_screenshots) continue;
    CuratedGame g{game.game_id, game.title, game.screenshots};
    std::sort(g.screenshots.begin(), g.screenshots.end(),
              [](const auto& a, const auto& b) { return a.screenshot_id < b.screenshot_id; });
    out.games.push_back(std::move(g));
  }
  std::sort(out.games.begin(), out.games.end(),
            [](const auto& a, const auto& b) { return a.game_id < b.game_id; });
  return out;
}

FoldAssignment assign_folds(const CuratedSet& curated, int k, std::uint64_t seed) {
  if (k < 1) raise(ErrorCode::invalid_argument, "fold count must be positive");
  FoldAssignment out;
  out.k = k;
  for (const auto& game : curated.games) {
    if (static_cast<int>(game.screenshots.size()) < k)
      raise(ErrorCode::infeasible, "game " + game.game_id + " has fewer screenshots than folds");
    std::vector<std::string> ids;
    ids.reserve(game.screenshots.size());
    for (const auto& s : game.screenshots) ids.push_back(s.screenshot_id);
    std::sort(ids.begin(), ids.end());
    auto rng = SeededRng::derive(seed, "fold-deal/" + game.game_id);
    rng.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i)
      out.fold_of[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return out;
}

const char* subset_name(Subset s) {
  switch (s) {
    case Subset::train: return "train";
    case Subset::val: return "val";
    case Subset::test: return "test";
  }
  return "train";
}

std::map<std::string, std::string> DatasetManifest::title_map() const {
  std::map<std::string, std::string> out;
  for (const auto& r : records) out.emplace(r.game_id, r.title);
  return out;
}

std::map<std::string, std::vector<const ManifestRecord*>> DatasetManifest::by_game() const {
  std::map<std::string, std::vector<const ManifestRecord*>> out;
  for (const auto& r : records) out[r.game_id].push_back(&r);
  return out;
}

DatasetManifest build_manifest(const CuratedSet& curated, const FoldAssignment& folds,
                               std::uint64_t seed, const CurationRule& rule,
                               const PathLookup& path_of) {
  DatasetManifest m;
  m.system = curated.system;
  m.seed = seed;
  m.rule = rule;
  m.k = folds.k;
  for (const auto& game : curated.games) {
    m.class_order.push_back(game.game_id);
    for (const auto& shot : game.screenshots) {
      auto it = folds.fold_of.find(shot.screenshot_id);
      if (it == folds.fold_of.end())
        raise(ErrorCode::invariant_violation,
              "screenshot " + shot.screenshot_id + " missing from fold assignment");
      m.records.push_back({shot.screenshot_id, game.game_id, game.title, path_of(shot), it->second});
    }
  }
  std::sort(m.class_order.begin(), m.class_order.end());
  std::sort(m.records.begin(), m.records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.game_id, a.screenshot_id) < std::tie(b.game_id, b.screenshot_id);
  });
  return m;
}

namespace {

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

SplitSpec split_impl(const DatasetManifest& manifest, int held_out_fold, double val_fraction,
                     std::uint64_t seed) {
  if (val_fraction <= 0.0 || val_fraction >= 1.0)
    raise(ErrorCode::invalid_argument, "val_fraction must be in (0, 1)");
  SplitSpec spec;
  spec.held_out_fold = held_out_fold;
  spec.val_fraction = val_fraction;

  for (auto& [game_id, records] : manifest.by_game()) {
    std::vector<std::string> remaining;
    for (const auto* r : records) {
      if (held_out_fold >= 0 && r->fold == held_out_fold)
        spec.subset_of[r->screenshot_id] = Subset::test;
      else
        remaining.push_back(r->screenshot_id);
    }
    const int n = static_cast<int>(remaining.size());
    if (n < 2)
      raise(ErrorCode::infeasible,
            "game " + game_id + " cannot provide both train and val screenshots");
    const int val_n = std::min(n - 1, std::max(1, round_half_up(val_fraction * n)));
    std::sort(remaining.begin(), remaining.end());
    auto rng = SeededRng::derive(seed, "val-split/" + game_id,
                                 static_cast<std::uint64_t>(held_out_fold + 1));
    rng.shuffle(remaining);
    for (int i = 0; i < n; ++i)
      spec.subset_of[remaining[static_cast<std::size_t>(i)]] =
          i < val_n ? Subset::val : Subset::train;
  }
  return spec;
}

}  // namespace

SplitSpec split_train_val(const DatasetManifest& manifest, int held_out_fold, double val_fraction,
                          std::uint64_t seed) {
  if (held_out_fold < 0 || held_out_fold >= manifest.k)
    raise(ErrorCode::invalid_argument, "held_out_fold out of range");
  return split_impl(manifest, held_out_fold, val_fraction, seed);
}

SplitSpec split_train_val_all(const DatasetManifest& manifest, double val_fraction,
                              std::uint64_t seed) {
  return split_impl(manifest, -1, val_fraction, seed);
}

// ---------------------------------------------------------------------------
// Manifest serialization
// ---------------------------------------------------------------------------

namespace {

void validate_manifest(const DatasetManifest& m) {
  if (m.version != 1)
    raise(ErrorCode::schema_version_mismatch,
          "unsupported manifest version " + std::to_string(m.version));
  if (m.k < 1) raise(ErrorCode::invariant_violation, "manifest k must be positive");

  std::set<std::string> games;
  std::map<std::string, std::map<int, int>> fold_counts;
  const ManifestRecord* prev = nullptr;
  std::set<std::string> seen_ids;
  for (const auto& r : m.records) {
    if (r.fold < 0 || r.fold >= m.k)
      raise(ErrorCode::invariant_violation,
            "record " + r.screenshot_id + " has fold index " + std::to_string(r.fold) +
                " outside [0," + std::to_string(m.k) + ")");
    if (!seen_ids.insert(r.screenshot_id).second)
      raise(ErrorCode::invariant_violation, "duplicate screenshot id " + r.screenshot_id);
    if (prev && std::tie(prev->game_id, prev->screenshot_id) > std::tie(r.game_id, r.screenshot_id))
      raise(ErrorCode::invariant_violation, "records not in canonical order");
    games.insert(r.game_id);
    fold_counts[r.game_id][r.fold]++;
    prev = &r;
  }

  std::vector<std::string> expected_order(games.begin(), games.end());
  if (expected_order != m.class_order)
    raise(ErrorCode::invariant_violation, "class_order must be the sorted distinct game ids");

  for (const auto& [game_id, counts] : fold_counts) {
    int total = 0, mn = 1 << 30, mx = 0;
    for (int f = 0; f < m.k; ++f) {
      auto it = counts.find(f);
      const int c = it == counts.end() ? 0 : it->second;
      total += c;
      mn = std::min(mn, c);
      mx = std::max(mx, c);
    }
    if (total < m.rule.min_screenshots)
      raise(ErrorCode::invariant_violation,
            "game " + game_id + " has fewer screenshots than the curation rule allows");
    if (mn < 1)
      raise(ErrorCode::invariant_violation, "game " + game_id + " missing from some fold");
    if (mx - mn > 1)
      raise(ErrorCode::invariant_violation, "game " + game_id + " fold imbalance exceeds 1");
  }
}

json header_json(const DatasetManifest& m) {
  return json{{"version", m.version},
              {"system", {{"provider_id", m.system.provider_id},
                          {"display_name", m.system.display_name}}},
              {"seed", m.seed},
              {"k", m.k},
              {"rule", {{"min_screenshots", m.rule.min_screenshots}}},
              {"class_order", m.class_order}};
}

json record_json(const ManifestRecord& r) {
  return json{{"screenshot_id", r.screenshot_id},
              {"game_id", r.game_id},
              {"title", r.title},
              {"path", r.path},
              {"fold", r.fold}};
}

}  // namespace

std::string manifest_to_string(const DatasetManifest& manifest) {
  validate_manifest(manifest);
  std::ostringstream out;
  out << header_json(manifest).dump() << "\n";
  for (const auto& r : manifest.records) out << record_json(r).dump() << "\n";
  return out.str();
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);  // binary: LF endings everywhere
  if (!out) raise(ErrorCode::io_error, "cannot write manifest " + file.string());
  out << manifest_to_string(manifest);
}

DatasetManifest read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) raise(ErrorCode::io_error, "cannot open manifest " + file.string());
  std::string line;
  if (!std::getline(in, line))
    raise(ErrorCode::invariant_violation, "manifest is empty: " + file.string());

  DatasetManifest m;
  try {
    const json h = json::parse(line);
    m.version = h.at("version").get<int>();
    if (m.version != 1)
      raise(ErrorCode::schema_version_mismatch,
            "unsupported manifest version " + std::to_string(m.version));
    m.system.provider_id = h.at("system").at("provider_id").get<std::string>();
    m.system.display_name = h.at("system").at("display_name").get<std::string>();
    m.seed = h.at("seed").get<std::uint64_t>();
    m.k = h.at("k").get<int>();
    m.rule.min_screenshots = h.at("rule").at("min_screenshots").get<int>();
    m.class_order = h.at("class_order").get<std::vector<std::string>>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      m.records.push_back({j.at("screenshot_id").get<std::string>(),
                           j.at("game_id").get<std::string>(),
                           j.at("title").get<std::string>(),
                           j.at("path").get<std::string>(),
                           j.at("fold").get<int>()});
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::malformed_response, std::string("manifest parse error: ") + e.what());
  }
  validate_manifest(m);
  return m;
}

}  // namespace gameid
