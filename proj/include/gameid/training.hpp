#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "gameid/backbones.hpp"
#include "gameid/curation.hpp"
#include "gameid/nn.hpp"

namespace gameid {

struct PlateauConfig {
  double initial_lr = 1e-3;
  double factor = 0.5;
  int patience = 2;      // epochs without val-accuracy improvement before halving
  double min_lr = 1e-5;
};

struct EarlyStopConfig {
  int patience = 10;  // epochs without a new val-loss minimum before stopping
};

struct TrainingConfig {
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-7};
  PlateauConfig plateau{};
  EarlyStopConfig early_stop{};
  int max_epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
  InitMode init_mode = InitMode::random;
  double val_fraction = 0.2;
  std::string weights_label = "random";  // random | imagenet | arcade (report key)
  std::filesystem::path transfer_source;  // artifact dir, init_mode == transferred
  std::filesystem::path pretrained_dir;   // weight store, init_mode == generic_pretrained
  bool freeze_backbone = false;
};

struct ScheduleState {
  double current_lr = 1e-3;
  double best_metric = -std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
};

// Strict improvement resets the counter; once the counter reaches the
// patience, the learning rate halves (clipped at min_lr) and the counter
// resets.
ScheduleState plateau_step(ScheduleState state, double epoch_val_accuracy,
                           const PlateauConfig& cfg);

// Stop once the running minimum of the history is `patience` or more epochs
// in the past.
bool early_stop_should_stop(const std::vector<double>& val_loss_history, int patience);

struct EpochRow {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainingLog {
  std::vector<EpochRow> rows;
  std::string stop_reason;  // "early-stop" | "epoch-cap"
  int epochs_run() const { return static_cast<int>(rows.size()); }
};

void write_training_log_csv(const TrainingLog& log, const std::filesystem::path& file);

struct TrainOutcome {
  std::filesystem::path artifact_dir;
  TrainingLog log;
  SplitSpec split;
  int best_epoch = 0;  // epoch whose weights the artifact carries
  double best_val_loss = 0.0;
};

// Trains one fold of the manifest: the held-out fold is untouched, the rest
// is split per-game into train/val, and the schedule runs off the val
// metrics. The artifact keeps the weights of the minimum-val-loss epoch.
TrainOutcome train_fold(const DatasetManifest& manifest, int held_out_fold,
                        const BackboneSpec& spec, const TrainingConfig& config,
                        const std::filesystem::path& cache_root,
                        const std::filesystem::path& artifact_dir);

// Single model over the whole curated set (no held-out fold); the saved
// artifact serves as a weight-transfer source.
TrainOutcome pretrain_reference(const DatasetManifest& manifest, const BackboneSpec& spec,
                                const TrainingConfig& config,
                                const std::filesystem::path& cache_root,
                                const std::filesystem::path& artifact_dir);

std::string training_config_to_json(const TrainingConfig& config, int held_out_fold);

}  // namespace gameid
