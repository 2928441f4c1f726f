#include "gameid/identify.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "gameid/error.hpp"

namespace gameid {

using nlohmann::json;

IdentificationModel::IdentificationModel(const std::filesystem::path& artifact_dir)
    : meta_(read_artifact_meta(artifact_dir)), model_(load_classifier_artifact(artifact_dir)) {
  if (meta_.class_order.size() != static_cast<std::size_t>(model_.num_classes()))
    raise(ErrorCode::corrupt_artifact, "class_order disagrees with the model output dimension");
}

Prediction IdentificationModel::identify(const ImageBlob& image_bytes, int top_k) {
  if (top_k < 1) raise(ErrorCode::invalid_argument, "top_k must be at least 1");
  nn::Tensor input = preprocess_image(image_bytes, meta_.input_resolution, meta_.preprocessing_id);
  nn::Tensor batch({1, 3, meta_.input_resolution, meta_.input_resolution});
  batch.data = std::move(input.data);

  nn::FwdContext ctx;  // inference: dropout inactive
  nn::Tensor probs = model_.probabilities(batch, ctx);
  const int g = probs.dim(1);

  std::vector<int> idx(static_cast<std::size_t>(g));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return probs.data[static_cast<std::size_t>(a)] > probs.data[static_cast<std::size_t>(b)];
  });

  Prediction out;
  out.distribution_sum = std::accumulate(probs.data.begin(), probs.data.end(), 0.0);
  const int n = std::min(top_k, g);
  for (int i = 0; i < n; ++i) {
    const std::string& game_id = meta_.class_order[static_cast<std::size_t>(idx[i])];
    auto it = meta_.title_map.find(game_id);
    out.entries.push_back({game_id, it == meta_.title_map.end() ? game_id : it->second,
                           static_cast<double>(probs.data[static_cast<std::size_t>(idx[i])])});
  }
  return out;
}

IdentificationModel load_artifact(const std::filesystem::path& artifact_dir) {
  return IdentificationModel(artifact_dir);
}

Prediction identify_screenshot(IdentificationModel& model, const ImageBlob& image_bytes,
                               int top_k) {
  return model.identify(image_bytes, top_k);
}

Prediction identify_screenshot_file(IdentificationModel& model,
                                    const std::filesystem::path& image_file, int top_k) {
  std::ifstream in(image_file, std::ios::binary);
  if (!in) raise(ErrorCode::io_error, "cannot open image " + image_file.string());
  ImageBlob bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return model.identify(bytes, top_k);
}

std::string prediction_to_json(const Prediction& prediction, const IdentificationModel& model) {
  json preds = json::array();
  for (const auto& e : prediction.entries)
    preds.push_back(
        {{"game_id", e.game_id}, {"title", e.title}, {"probability", e.probability}});
  json j{{"predictions", preds},
         {"model",
          {{"system", model.meta().system_display_name},
           {"backbone", model.meta().backbone},
           {"hash", model.meta().weights_hash}}}};
  return j.dump();
}

}  // namespace gameid
