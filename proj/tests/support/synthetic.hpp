#pragma once

// Test-only helpers: deterministic synthetic catalogs, recorded-fixture
// writers, toy image corpora, and independent invariant oracles. Everything
// here is seeded and reproducible.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gameid/catalog.hpp"
#include "gameid/curation.hpp"

namespace gameid::testsupport {

struct CountSpec {
  int total_games = 0;
  int total_screenshots = 0;
  int selected_games = 0;       // games that must have >= min_selected shots
  int selected_screenshots = 0; // their combined screenshot count
  int min_selected = 5;
};

// Catalog whose screenshot-count distribution realizes the spec exactly:
// selected games get >= min_selected shots summing to selected_screenshots,
// the rest get <= min_selected-1 shots summing to the remainder.
std::vector<GameRecord> make_catalog_with_counts(const SystemId& system, const CountSpec& spec,
                                                 std::uint64_t seed);

// Uniform random catalog: n games with shot counts drawn in [lo, hi].
std::vector<GameRecord> make_random_catalog(const SystemId& system, int n_games, int lo, int hi,
                                            std::uint64_t seed);

struct FixtureOptions {
  long page_size = 100;
  bool include_images = false;        // write PNG blobs + image responses
  bool include_screenshot_endpoints = false;
  int image_size = 48;
};

// Writes a recorded-response fixture directory replayable by the provider.
void write_fixture_dir(const std::filesystem::path& dir, const SystemId& system,
                       const std::vector<GameRecord>& catalog, const FixtureOptions& opts);

// Low-level writer for hand-crafted response sequences.
void write_raw_fixture(const std::filesystem::path& dir, const nlohmann::json& responses);

// Small PNG whose palette and pattern are unique per (game, shot); classes
// stay trivially separable so tiny models can memorize them.
ImageBlob make_toy_image(int game_idx, int shot_idx, int size);

struct ToyDataset {
  SystemId system;
  std::vector<GameRecord> catalog;
  std::filesystem::path cache_root;
  DatasetManifest manifest;
  std::filesystem::path manifest_path;
};

// Catalog + cached images + manifest, ready for training, no fetch involved.
ToyDataset make_toy_dataset(const std::filesystem::path& tmp_root, int n_games,
                            int shots_per_game, std::uint64_t seed, int image_size = 48,
                            int k = 5);

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

// Brute-force fold-invariant check: partition, per-game per-fold coverage,
// per-game imbalance <= 1. Returns an empty string when everything holds.
std::string check_fold_invariants(const CuratedSet& curated, const FoldAssignment& folds, int k);

// Split invariants: test = held-out fold exactly, >=1 train and >=1 val per
// game, per-game val count = max(1, round-half-up(f*n)).
std::string check_split_invariants(const CuratedSet& curated, const FoldAssignment& folds,
                                   const SplitSpec& split, int held_out_fold, double val_fraction);

// Straightforward two-pass mean / population std in long double.
std::pair<double, double> naive_mean_std(const std::vector<double>& values);

std::filesystem::path make_temp_dir(const std::string& tag);

}  // namespace gameid::testsupport
