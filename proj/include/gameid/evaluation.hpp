#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gameid/backbones.hpp"
#include "gameid/curation.hpp"

namespace gameid {

struct FoldResult {
  std::string system;
  std::string architecture;
  std::string weights_mode;  // random | imagenet | arcade
  int fold = 0;
  double accuracy = 0.0;  // [0, 1]
  int epochs_run = 0;
};

struct GroupKey {
  std::string system;
  std::string architecture;
  std::string weights_mode;

  auto operator<=>(const GroupKey&) const = default;
};

struct GroupSummary {
  GroupKey key;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population standard deviation over the folds
  double mean_epochs = 0.0;
  double std_epochs = 0.0;
  bool has_epochs = false;
  int n = 0;
};

struct SystemReport {
  GroupSummary summary;
  std::vector<FoldResult> folds;
};

// Exactly k results with one shared group key; population statistics.
SystemReport aggregate_system(const std::vector<FoldResult>& results, int expect_k = 5);

struct BestEntry {
  std::string system;
  // (architecture, weights_mode) pairs; exact ties listed jointly
  std::vector<std::pair<std::string, std::string>> winners;
  double accuracy = 0.0;
};

struct BestCombination {
  std::vector<BestEntry> per_system;  // canonical system order
  double overall_mean = 0.0;          // unweighted mean of per-system maxima
};

BestCombination select_best_combination(const std::vector<GroupSummary>& groups);

struct ScoredFold {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
};

// Top-1 accuracy of the artifact on the held-out fold drawn from the
// manifest; argmax ties resolve to the lowest class index.
ScoredFold score_fold(ClassifierModel& model, const DatasetManifest& manifest, int fold,
                      const std::filesystem::path& cache_root, int batch_size = 32);
ScoredFold score_fold_artifact(const std::filesystem::path& artifact_dir,
                               const DatasetManifest& manifest, int fold,
                               const std::filesystem::path& cache_root, int batch_size = 32);

// Results-file io (CSV: system,architecture,weights,fold,accuracy,epochs).
void write_fold_results_csv(const std::vector<FoldResult>& results,
                            const std::filesystem::path& file);
std::vector<FoldResult> read_fold_results_csv(const std::filesystem::path& file);

// Group-summary CSV (accuracies in percent as published):
//   system,architecture,weights,acc_mean,acc_std[,epochs_mean,epochs_std]
// Exact duplicate rows collapse; conflicting duplicates are rejected.
std::vector<GroupSummary> load_group_summaries_csv(const std::filesystem::path& file);
std::vector<GroupSummary> load_group_summaries_dir(const std::filesystem::path& dir);

// One accuracy table per weights mode (rows: systems, columns:
// architectures, cells "mean (std)" in percent), one epochs table per mode
// where epochs exist, and the best-combination table. Deterministic order;
// missing cells render as an em dash placeholder.
std::vector<std::filesystem::path> render_report(const std::vector<GroupSummary>& groups,
                                                 const BestCombination& best,
                                                 const std::string& format,
                                                 const std::filesystem::path& out_dir);

const std::vector<std::string>& canonical_system_order();
std::vector<std::string> canonical_architecture_order();
const std::vector<std::string>& canonical_weights_order();

std::string format_percent(double fraction);  // 2 decimals, half-up, '.' separator

}  // namespace gameid
