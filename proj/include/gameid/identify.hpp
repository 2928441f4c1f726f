#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "gameid/backbones.hpp"
#include "gameid/image.hpp"

namespace gameid {

struct PredictionEntry {
  std::string game_id;
  std::string title;
  double probability = 0.0;
};

struct Prediction {
  std::vector<PredictionEntry> entries;  // probability non-increasing, length min(top_k, g)
  double distribution_sum = 0.0;         // over all g classes, diagnostics
};

// A frozen artifact ready for inference: dropout inactive, weights
// hash-verified at load, preprocessing taken from the artifact meta.
class IdentificationModel {
 public:
  explicit IdentificationModel(const std::filesystem::path& artifact_dir);

  Prediction identify(const ImageBlob& image_bytes, int top_k);

  const ArtifactMeta& meta() const { return meta_; }
  const std::string& weights_hash() const { return meta_.weights_hash; }
  int num_classes() const { return model_.num_classes(); }

 private:
  ArtifactMeta meta_;
  ClassifierModel model_;
};

IdentificationModel load_artifact(const std::filesystem::path& artifact_dir);

Prediction identify_screenshot(IdentificationModel& model, const ImageBlob& image_bytes,
                               int top_k);
Prediction identify_screenshot_file(IdentificationModel& model,
                                    const std::filesystem::path& image_file, int top_k);

std::string prediction_to_json(const Prediction& prediction, const IdentificationModel& model);

}  // namespace gameid
