#include "gameid/training.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include "gameid/error.hpp"
#include "gameid/image.hpp"

namespace gameid {

namespace fs = std::filesystem;
using nlohmann::json;

ScheduleState plateau_step(ScheduleState state, double epoch_val_accuracy,
                           const PlateauConfig& cfg) {
  if (epoch_val_accuracy > state.best_metric) {
    state.best_metric = epoch_val_accuracy;
    state.epochs_since_improvement = 0;
    return state;
  }
  ++state.epochs_since_improvement;
  if (state.epochs_since_improvement >= cfg.patience) {
    state.current_lr = std::max(state.current_lr * cfg.factor, cfg.min_lr);
    state.epochs_since_improvement = 0;
  }
  return state;
}

bool early_stop_should_stop(const std::vector<double>& val_loss_history, int patience) {
  if (val_loss_history.empty())
    raise(ErrorCode::invalid_argument, "early stop check needs a non-empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_loss_history.size(); ++i)
    if (val_loss_history[i] < val_loss_history[best]) best = i;  // first minimum wins ties
  return (val_loss_history.size() - 1 - best) >= static_cast<std::size_t>(patience);
}

void write_training_log_csv(const TrainingLog& log, const fs::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) raise(ErrorCode::io_error, "cannot write training log " + file.string());
  out << "epoch,lr,train_loss,train_acc,val_loss,val_acc\n";
  char buf[256];
  for (const auto& r : log.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.epoch, r.lr,
                  r.train_loss, r.train_acc, r.val_loss, r.val_acc);
    out << buf;
  }
}

std::string training_config_to_json(const TrainingConfig& config, int held_out_fold) {
  json j{{"optimizer",
          {{"name", "adam"},
           {"initial_lr", config.adam.lr},
           {"beta1", config.adam.beta1},
           {"beta2", config.adam.beta2},
           {"epsilon", config.adam.epsilon}}},
         {"plateau",
          {{"monitor", "val_accuracy"},
           {"factor", config.plateau.factor},
           {"patience", config.plateau.patience},
           {"min_lr", config.plateau.min_lr}}},
         {"early_stop", {{"monitor", "val_loss"}, {"patience", config.early_stop.patience}}},
         {"max_epochs", config.max_epochs},
         {"batch_size", config.batch_size},
         {"seed", config.seed},
         {"init_mode", init_mode_name(config.init_mode)},
         {"weights_label", config.weights_label},
         {"val_fraction", config.val_fraction},
         {"freeze_backbone", config.freeze_backbone},
         {"held_out_fold", held_out_fold}};
  return j.dump();
}

namespace {

struct Sample {
  const ManifestRecord* record;
  int label;
};

// Decoded-and-preprocessed image pool. Everything the toy and fixture runs
// touch fits in memory; beyond the cap images are re-decoded per use.
class ImagePool {
 public:
  ImagePool(const fs::path& cache_root, int resolution, std::string preprocessing_id,
            std::size_t memo_cap = 4096)
      : root_(cache_root), resolution_(resolution), preprocessing_id_(std::move(preprocessing_id)),
        memo_cap_(memo_cap) {}

  const nn::Tensor& get(const ManifestRecord& record) {
    auto it = memo_.find(record.screenshot_id);
    if (it != memo_.end()) return it->second;
    nn::Tensor img = load(record);
    if (memo_.size() < memo_cap_)
      return memo_.emplace(record.screenshot_id, std::move(img)).first->second;
    scratch_ = std::move(img);
    return scratch_;
  }

 private:
  fs::path root_;
  int resolution_;
  std::string preprocessing_id_;
  std::size_t memo_cap_;
  std::unordered_map<std::string, nn::Tensor> memo_;
  nn::Tensor scratch_;

  nn::Tensor load(const ManifestRecord& record) const {
    const fs::path file = root_ / record.path;
    std::ifstream in(file, std::ios::binary);
    if (!in)
      raise(ErrorCode::missing_image,
            "image missing from cache: " + record.screenshot_id + " (" + file.string() + ")");
    ImageBlob bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return preprocess_image(bytes, resolution_, preprocessing_id_);
  }
};

nn::Tensor stack_batch(ImagePool& pool, const std::vector<Sample>& samples,
                       const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                       int resolution) {
  const int b = static_cast<int>(end - begin);
  nn::Tensor batch({b, 3, resolution, resolution});
  const std::size_t stride = static_cast<std::size_t>(3) * resolution * resolution;
  for (std::size_t i = begin; i < end; ++i) {
    const nn::Tensor& img = pool.get(*samples[idx[i]].record);
    std::copy(img.data.begin(), img.data.end(), batch.data.begin() + (i - begin) * stride);
  }
  return batch;
}

std::vector<int> batch_labels(const std::vector<Sample>& samples,
                              const std::vector<std::size_t>& idx, std::size_t begin,
                              std::size_t end) {
  std::vector<int> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(samples[idx[i]].label);
  return out;
}

struct EvalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalMetrics evaluate(ClassifierModel& model, ImagePool& pool, const std::vector<Sample>& samples,
                     int batch_size, int resolution) {
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  nn::FwdContext ctx;  // inference mode
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < idx.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(idx.size(), begin + static_cast<std::size_t>(batch_size));
    nn::Tensor batch = stack_batch(pool, samples, idx, begin, end, resolution);
    const auto labels = batch_labels(samples, idx, begin, end);
    nn::Tensor logits = model.logits(batch, ctx);
    auto res = nn::softmax_cross_entropy(logits, labels);
    loss_sum += res.loss * static_cast<double>(end - begin);
    const int g = logits.dim(1);
    for (std::size_t i = 0; i < end - begin; ++i) {
      const float* row = res.probs.data.data() + i * static_cast<std::size_t>(g);
      int arg = 0;
      for (int c = 1; c < g; ++c)
        if (row[c] > row[arg]) arg = c;  // ties: lowest index wins
      if (arg == labels[i]) ++correct;
    }
  }
  EvalMetrics m;
  m.loss = loss_sum / static_cast<double>(samples.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  return m;
}

TrainOutcome train_on_split(const DatasetManifest& manifest, const SplitSpec& split,
                            int held_out_fold, const BackboneSpec& spec,
                            const TrainingConfig& config, const fs::path& cache_root,
                            const fs::path& artifact_dir) {
  if (config.max_epochs < 1 || config.batch_size < 1)
    raise(ErrorCode::invalid_argument, "max_epochs and batch_size must be positive");
  if (config.plateau.min_lr > config.adam.lr)
    raise(ErrorCode::invalid_argument, "min_lr must not exceed the initial lr");

  std::unordered_map<std::string, int> label_of;
  for (std::size_t i = 0; i < manifest.class_order.size(); ++i)
    label_of[manifest.class_order[i]] = static_cast<int>(i);

  std::vector<Sample> train_set, val_set;
  for (const auto& r : manifest.records) {
    const auto subset = split.subset_of.at(r.screenshot_id);
    if (subset == Subset::train)
      train_set.push_back({&r, label_of.at(r.game_id)});
    else if (subset == Subset::val)
      val_set.push_back({&r, label_of.at(r.game_id)});
  }
  if (train_set.empty() || val_set.empty())
    raise(ErrorCode::infeasible, "split produced an empty train or val subset");

  ClassifierModel model = assemble_classifier(spec, manifest.class_order, config.init_mode,
                                              config.seed, config.transfer_source,
                                              config.pretrained_dir);
  ImagePool pool(cache_root, spec.input_resolution, spec.preprocessing_id);

  nn::Adam adam(config.adam);
  auto trainable = config.freeze_backbone ? model.head_params() : model.all_params();
  adam.attach(trainable);

  ScheduleState sched;
  sched.current_lr = config.adam.lr;
  TrainingLog log;
  std::vector<double> val_losses;

  auto all_params = model.all_params();
  std::vector<std::vector<float>> best_weights;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double epoch_lr = sched.current_lr;  // lr in force for this epoch's updates
    auto shuffle_rng = SeededRng::derive(config.seed, "batch-order", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    auto dropout_rng = SeededRng::derive(config.seed, "dropout", static_cast<std::uint64_t>(epoch));

    double train_loss_sum = 0.0;
    std::size_t train_correct = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      nn::Tensor batch = stack_batch(pool, train_set, order, begin, end, spec.input_resolution);
      const auto labels = batch_labels(train_set, order, begin, end);

      nn::FwdContext ctx{true, &dropout_rng};
      nn::Tensor logits = model.logits(batch, ctx);
      auto res = nn::softmax_cross_entropy(logits, labels);
      train_loss_sum += res.loss * static_cast<double>(end - begin);
      const int g = logits.dim(1);
      for (std::size_t i = 0; i < end - begin; ++i) {
        const float* row = res.probs.data.data() + i * static_cast<std::size_t>(g);
        int arg = 0;
        for (int c = 1; c < g; ++c)
          if (row[c] > row[arg]) arg = c;
        if (arg == labels[i]) ++train_correct;
      }

      adam.zero_grad();
      model.backward(res.dlogits, !config.freeze_backbone);
      adam.step(epoch_lr);
    }

    const EvalMetrics val =
        evaluate(model, pool, val_set, config.batch_size, spec.input_resolution);
    val_losses.push_back(val.loss);
    sched = plateau_step(sched, val.accuracy, config.plateau);

    EpochRow row;
    row.epoch = epoch;
    row.lr = sched.current_lr;  // value after observing this epoch (non-increasing column)
    row.train_loss = train_loss_sum / static_cast<double>(train_set.size());
    row.train_acc = static_cast<double>(train_correct) / static_cast<double>(train_set.size());
    row.val_loss = val.loss;
    row.val_acc = val.accuracy;
    log.rows.push_back(row);

    if (val.loss < best_val_loss) {
      best_val_loss = val.loss;
      best_epoch = epoch;
      best_weights.clear();
      for (const auto& p : all_params) best_weights.push_back(p.value->data);
    }

    if (early_stop_should_stop(val_losses, config.early_stop.patience)) {
      log.stop_reason = "early-stop";
      break;
    }
  }
  if (log.stop_reason.empty()) log.stop_reason = "epoch-cap";

  // evaluation uses the minimum-val-loss weights
  for (std::size_t i = 0; i < all_params.size(); ++i) all_params[i].value->data = best_weights[i];

  ArtifactMeta meta;
  meta.title_map = manifest.title_map();
  meta.system_provider_id = manifest.system.provider_id;
  meta.system_display_name = manifest.system.display_name;
  meta.init_lineage.push_back(init_mode_name(config.init_mode));
  if (config.init_mode == InitMode::transferred)
    meta.init_lineage.push_back("source:" + read_artifact_meta(config.transfer_source).weights_hash);
  meta.training_config_json = training_config_to_json(config, held_out_fold);
  meta.epochs_run = log.epochs_run();
  meta.stop_reason = log.stop_reason;
  save_artifact(artifact_dir, model, std::move(meta));
  write_training_log_csv(log, artifact_dir / "training_log.csv");

  TrainOutcome outcome;
  outcome.artifact_dir = artifact_dir;
  outcome.log = std::move(log);
  outcome.split = split;
  outcome.best_epoch = best_epoch;
  outcome.best_val_loss = best_val_loss;
  return outcome;
}

}  // namespace

TrainOutcome train_fold(const DatasetManifest& manifest, int held_out_fold,
                        const BackboneSpec& spec, const TrainingConfig& config,
                        const fs::path& cache_root, const fs::path& artifact_dir) {
  const SplitSpec split =
      split_train_val(manifest, held_out_fold, config.val_fraction, config.seed);
  return train_on_split(manifest, split, held_out_fold, spec, config, cache_root, artifact_dir);
}

TrainOutcome pretrain_reference(const DatasetManifest& manifest, const BackboneSpec& spec,
                                const TrainingConfig& config, const fs::path& cache_root,
                                const fs::path& artifact_dir) {
  const SplitSpec split = split_train_val_all(manifest, config.val_fraction, config.seed);
  return train_on_split(manifest, split, -1, spec, config, cache_root, artifact_dir);
}

}  // namespace gameid
