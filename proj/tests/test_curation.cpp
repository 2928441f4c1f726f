#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "gameid/curation.hpp"
#include "gameid/error.hpp"
#include "support/synthetic.hpp"

using namespace gameid;
namespace ts = gameid::testsupport;
namespace fs = std::filesystem;

namespace {

const SystemId kToy{"toy", "Toyland"};

std::vector<GameRecord> catalog_with_counts(std::initializer_list<int> counts) {
  std::vector<GameRecord> out;
  int idx = 0;
  for (int c : counts) {
    GameRecord g;
    g.game_id = "toy-g" + std::to_string(idx);
    g.title = "Game " + std::to_string(idx);
    g.system = kToy;
    for (int s = 0; s < c; ++s) {
      const std::string sid = g.game_id + "-s" + std::to_string(s);
      g.screenshots.push_back({sid, g.game_id, "/images/" + sid + ".png", 0, 0});
    }
    out.push_back(std::move(g));
    ++idx;
  }
  return out;
}

PathLookup fake_paths() {
  return [](const ScreenshotRecord& shot) { return "img/" + shot.screenshot_id + ".png"; };
}

}  // namespace

TEST_CASE("selection keeps exactly the games at or above the threshold") {
  const auto catalog = catalog_with_counts({5, 4, 7});
  const CuratedSet curated = select_games(catalog, {5});
  REQUIRE(curated.games.size() == 2);
  CHECK(curated.games[0].game_id == "toy-g0");
  CHECK(curated.games[1].game_id == "toy-g2");
  CHECK(curated.total_screenshots() == 12);
}

TEST_CASE("selection of an all-below-threshold catalog is empty, not an error") {
  const auto catalog = catalog_with_counts({4, 4, 4, 4});
  const CuratedSet curated = select_games(catalog, {5});
  CHECK(curated.games.empty());
  CHECK(curated.total_screenshots() == 0);
}

TEST_CASE("selection reproduces the recorded per-system curation counts") {
  // home-console fixture: 598 games / 2981 screenshots -> 302 / 2148
  const auto atari = ts::make_catalog_with_counts({"atari-2600", "Atari 2600"},
                                                  {598, 2981, 302, 2148, 5}, 1001);
  const CuratedSet curated = select_games(atari, {5});
  CHECK(curated.games.size() == 302);
  CHECK(curated.total_screenshots() == 2148);

  // arcade pretraining corpus: 3125 / 24714 -> 1633 / 24235
  const auto arcade = ts::make_catalog_with_counts({"arcade", "Arcade"},
                                                   {3125, 24714, 1633, 24235, 5}, 2002);
  const CuratedSet curated_arcade = select_games(arcade, {5});
  CHECK(curated_arcade.games.size() == 1633);
  CHECK(curated_arcade.total_screenshots() == 24235);
}

TEST_CASE("fold deal: exact pigeonhole for 5 shots and {2,2,1,1,1} for 7") {
  const auto catalog = catalog_with_counts({5, 7});
  const CuratedSet curated = select_games(catalog, {5});
  const FoldAssignment folds = assign_folds(curated, 5, 42);

  std::map<std::string, std::vector<int>> per_game(
      {{"toy-g0", std::vector<int>(5, 0)}, {"toy-g1", std::vector<int>(5, 0)}});
  for (const auto& g : curated.games)
    for (const auto& s : g.screenshots)
      per_game[g.game_id][static_cast<std::size_t>(folds.fold_of.at(s.screenshot_id))]++;

  CHECK(per_game["toy-g0"] == std::vector<int>({1, 1, 1, 1, 1}));
  std::multiset<int> sizes(per_game["toy-g1"].begin(), per_game["toy-g1"].end());
  CHECK(sizes == std::multiset<int>({1, 1, 1, 2, 2}));
}

TEST_CASE("fold assignment is infeasible when a game has fewer shots than folds") {
  const auto catalog = catalog_with_counts({5});
  CuratedSet curated = select_games(catalog, {5});
  curated.games[0].screenshots.resize(4);
  try {
    assign_folds(curated, 5, 0);
    FAIL("expected infeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::infeasible);
  }
}

TEST_CASE("fold invariants hold over 100 random synthetic catalogs") {
  for (int round = 0; round < 100; ++round) {
    const auto catalog = ts::make_random_catalog(kToy, 100, 5, 9, 9000 + round);
    const CuratedSet curated = select_games(catalog, {5});
    const FoldAssignment folds = assign_folds(curated, 5, 31 * round + 7);
    const std::string issue = ts::check_fold_invariants(curated, folds, 5);
    CAPTURE(round);
    CHECK(issue.empty());
    CAPTURE(issue);
  }
}

TEST_CASE("fold assignment is deterministic and input-order independent") {
  auto catalog = ts::make_random_catalog(kToy, 40, 5, 9, 77);
  const CuratedSet curated = select_games(catalog, {5});
  const FoldAssignment a = assign_folds(curated, 5, 123);
  const FoldAssignment b = assign_folds(curated, 5, 123);
  CHECK(a.fold_of == b.fold_of);

  std::reverse(catalog.begin(), catalog.end());
  const FoldAssignment c = assign_folds(select_games(catalog, {5}), 5, 123);
  CHECK(a.fold_of == c.fold_of);

  const FoldAssignment d = assign_folds(curated, 5, 124);
  CHECK(a.fold_of != d.fold_of);
}

TEST_CASE("split: per-game val counts follow max(1, round-half-up(f*n))") {
  // one game with 5 shots: hold out one fold -> 4 remaining -> 1 val, 3 train
  const auto catalog = catalog_with_counts({5, 10});
  const CuratedSet curated = select_games(catalog, {5});
  const FoldAssignment folds = assign_folds(curated, 5, 3);
  const DatasetManifest manifest = build_manifest(curated, folds, 3, {5}, fake_paths());
  const SplitSpec split = split_train_val(manifest, 0, 0.2, 3);

  std::map<std::string, std::map<Subset, int>> counts;
  for (const auto& r : manifest.records) counts[r.game_id][split.subset_of.at(r.screenshot_id)]++;

  CHECK(counts["toy-g0"][Subset::val] == 1);   // max(1, round(0.8)) = 1
  CHECK(counts["toy-g0"][Subset::train] == 3);
  CHECK(counts["toy-g0"][Subset::test] == 1);
  CHECK(counts["toy-g1"][Subset::val] == 2);   // round(1.6) = 2
  CHECK(counts["toy-g1"][Subset::train] == 6);
  CHECK(counts["toy-g1"][Subset::test] == 2);
}

TEST_CASE("split invariants and global fraction over a 50-game synthetic system") {
  const auto catalog = ts::make_random_catalog(kToy, 50, 5, 14, 5150);
  const CuratedSet curated = select_games(catalog, {5});
  const FoldAssignment folds = assign_folds(curated, 5, 11);
  const DatasetManifest manifest = build_manifest(curated, folds, 11, {5}, fake_paths());

  for (int fold = 0; fold < 5; ++fold) {
    const SplitSpec split = split_train_val(manifest, fold, 0.2, 11);
    const std::string issue = ts::check_split_invariants(curated, folds, split, fold, 0.2);
    CAPTURE(fold);
    CAPTURE(issue);
    CHECK(issue.empty());

    std::size_t train = 0, val = 0;
    for (const auto& [_, subset] : split.subset_of) {
      if (subset == Subset::train) ++train;
      if (subset == Subset::val) ++val;
    }
    const double fraction = static_cast<double>(val) / static_cast<double>(train + val);
    CHECK(fraction >= 0.15);
    CHECK(fraction <= 0.30);
  }
}

TEST_CASE("split rejects an out-of-range held-out fold") {
  const auto catalog = catalog_with_counts({5});
  const CuratedSet curated = select_games(catalog, {5});
  const FoldAssignment folds = assign_folds(curated, 5, 1);
  const DatasetManifest manifest = build_manifest(curated, folds, 1, {5}, fake_paths());
  CHECK_THROWS_AS(split_train_val(manifest, 5, 0.2, 1), Error);
  CHECK_THROWS_AS(split_train_val(manifest, -1, 0.2, 1), Error);
}

TEST_CASE("manifest round-trips and serializes canonically") {
  auto catalog = ts::make_random_catalog(kToy, 30, 5, 8, 4242);
  const CuratedSet curated = select_games(catalog, {5});
  const FoldAssignment folds = assign_folds(curated, 5, 9);
  const DatasetManifest manifest = build_manifest(curated, folds, 9, {5}, fake_paths());

  const fs::path tmp = ts::make_temp_dir("manifest");
  write_manifest(manifest, tmp / "m.jsonl");
  const DatasetManifest back = read_manifest(tmp / "m.jsonl");
  CHECK(back.records == manifest.records);
  CHECK(back.class_order == manifest.class_order);
  CHECK(back.seed == manifest.seed);
  CHECK(back.k == manifest.k);

  // same catalog in a different order -> byte-identical file
  std::reverse(catalog.begin(), catalog.end());
  const CuratedSet curated2 = select_games(catalog, {5});
  const DatasetManifest manifest2 =
      build_manifest(curated2, assign_folds(curated2, 5, 9), 9, {5}, fake_paths());
  CHECK(manifest_to_string(manifest) == manifest_to_string(manifest2));
}

TEST_CASE("manifest read rejects out-of-range folds and unknown versions") {
  const auto catalog = catalog_with_counts({5});
  const CuratedSet curated = select_games(catalog, {5});
  const FoldAssignment folds = assign_folds(curated, 5, 1);
  DatasetManifest manifest = build_manifest(curated, folds, 1, {5}, fake_paths());

  const fs::path tmp = ts::make_temp_dir("manifest_bad");

  // fold index = k is rejected
  DatasetManifest bad = manifest;
  bad.records[0].fold = 5;
  std::ofstream out(tmp / "bad.jsonl", std::ios::binary);
  out << R"({"class_order":["toy-g0"],"k":5,"rule":{"min_screenshots":5},"seed":1,)"
      << R"("system":{"display_name":"Toyland","provider_id":"toy"},"version":1})" << "\n";
  for (const auto& r : bad.records) {
    out << R"({"fold":)" << r.fold << R"(,"game_id":")" << r.game_id << R"(","path":")" << r.path
        << R"(","screenshot_id":")" << r.screenshot_id << R"(","title":")" << r.title << "\"}\n";
  }
  out.close();
  try {
    read_manifest(tmp / "bad.jsonl");
    FAIL("expected invariant_violation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invariant_violation);
  }

  // unknown schema version is rejected
  std::ofstream v2(tmp / "v2.jsonl", std::ios::binary);
  v2 << R"({"class_order":[],"k":5,"rule":{"min_screenshots":5},"seed":1,)"
     << R"("system":{"display_name":"Toyland","provider_id":"toy"},"version":2})" << "\n";
  v2.close();
  try {
    read_manifest(tmp / "v2.jsonl");
    FAIL("expected schema_version_mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::schema_version_mismatch);
  }
}

TEST_CASE("class order is the sorted distinct game ids") {
  const auto catalog = ts::make_random_catalog(kToy, 25, 5, 7, 31337);
  const CuratedSet curated = select_games(catalog, {5});
  const DatasetManifest manifest =
      build_manifest(curated, assign_folds(curated, 5, 2), 2, {5}, fake_paths());
  std::set<std::string> ids;
  for (const auto& r : manifest.records) ids.insert(r.game_id);
  CHECK(manifest.class_order == std::vector<std::string>(ids.begin(), ids.end()));
}
