#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gameid/catalog.hpp"

namespace gameid {

struct CurationRule {
  int min_screenshots = 5;
};

struct CuratedGame {
  std::string game_id;
  std::string title;
  std::vector<ScreenshotRecord> screenshots;  // sorted by screenshot_id
};

struct CuratedSet {
  SystemId system;
  std::vector<CuratedGame> games;  // sorted by game_id

  std::size_t total_screenshots() const;
};

// Keeps exactly the games with >= rule.min_screenshots screenshots, with all
// of their screenshots.
CuratedSet select_games(const std::vector<GameRecord>& catalog, const CurationRule& rule);

struct FoldAssignment {
  int k = 5;
  std::map<std::string, int> fold_of;  // screenshot_id -> [0, k)
};

// Per game: seeded shuffle, then a round-robin deal across the k folds. The
// per-game generator is derived from (seed, game_id), so the result does not
// depend on catalog iteration order.
FoldAssignment assign_folds(const CuratedSet& curated, int k, std::uint64_t seed);

enum class Subset { train, val, test };
const char* subset_name(Subset s);

struct SplitSpec {
  int held_out_fold = -1;  // -1: no test fold (reference pretraining)
  double val_fraction = 0.2;
  std::map<std::string, Subset> subset_of;
};

struct ManifestRecord {
  std::string screenshot_id;
  std::string game_id;
  std::string title;
  std::string path;  // relative to the image cache root
  int fold = 0;

  bool operator==(const ManifestRecord&) const = default;
};

struct DatasetManifest {
  int version = 1;
  SystemId system;
  std::uint64_t seed = 0;
  CurationRule rule;
  int k = 5;
  std::vector<ManifestRecord> records;       // sorted by (game_id, screenshot_id)
  std::vector<std::string> class_order;      // sorted distinct game_ids

  std::map<std::string, std::string> title_map() const;
  std::map<std::string, std::vector<const ManifestRecord*>> by_game() const;
};

using PathLookup = std::function<std::string(const ScreenshotRecord&)>;

DatasetManifest build_manifest(const CuratedSet& curated, const FoldAssignment& folds,
                               std::uint64_t seed, const CurationRule& rule,
                               const PathLookup& path_of);

// Per game with n remaining screenshots: val = max(1, round-half-up(f*n)),
// the rest train; the held-out fold is the test set verbatim.
SplitSpec split_train_val(const DatasetManifest& manifest, int held_out_fold, double val_fraction,
                          std::uint64_t seed);

// Validation split over the full manifest, no held-out fold.
SplitSpec split_train_val_all(const DatasetManifest& manifest, double val_fraction,
                              std::uint64_t seed);

// JSON Lines, UTF-8, LF; header line then one record per line in canonical
// order. Reading validates schema version and every manifest invariant.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);
DatasetManifest read_manifest(const std::filesystem::path& file);

std::string manifest_to_string(const DatasetManifest& manifest);

}  // namespace gameid
