#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gameid/nn.hpp"

namespace gameid {

// Feature-map shape produced by a backbone: spatial [w, y, z] for the
// convolutional families, a 1-D token dimension for the ViT variants.
struct FeatureShape {
  int w = 0;
  int y = 0;
  int z = 0;
  int token_dim = 0;

  bool is_1d() const { return token_dim > 0; }
  int feature_dim() const { return is_1d() ? token_dim : z; }
  bool operator==(const FeatureShape&) const = default;
};

struct BackboneSpec {
  std::string name;
  int input_resolution = 0;
  FeatureShape feature_shape;
  double param_count_m = 0.0;  // published parameter count, millions
  std::string preprocessing_id;
  bool pooled = true;  // false iff the feature shape is 1-D
};

// The thirteen architecture descriptors, in canonical report-column order.
const std::vector<BackboneSpec>& backbone_registry();
const BackboneSpec& get_backbone_spec(const std::string& name);
const BackboneSpec& smallest_backbone_spec();  // minimal published param count

enum class InitMode { random, generic_pretrained, transferred };
const char* init_mode_name(InitMode mode);
InitMode init_mode_from_name(const std::string& name);

struct HeadSpec {
  double dropout_rate = 0.2;
  int num_classes = 0;
};

// Backbone feature extractor plus the classification head:
// backbone -> [global average pooling iff pooled] -> dropout -> dense -> softmax.
class ClassifierModel {
 public:
  ClassifierModel(const BackboneSpec& spec, HeadSpec head, std::vector<std::string> class_order);

  nn::Tensor features(const nn::Tensor& batch, const nn::FwdContext& ctx);
  nn::Tensor logits(const nn::Tensor& batch, const nn::FwdContext& ctx);
  nn::Tensor probabilities(const nn::Tensor& batch, const nn::FwdContext& ctx);
  nn::Tensor backward(const nn::Tensor& dlogits, bool update_backbone = true);

  const BackboneSpec& spec() const { return spec_; }
  const HeadSpec& head_spec() const { return head_spec_; }
  const std::vector<std::string>& class_order() const { return class_order_; }
  int num_classes() const { return head_spec_.num_classes; }

  std::vector<nn::NamedParam> backbone_params() { return backbone_.params(); }
  std::vector<nn::NamedParam> head_params() { return head_.params(); }
  std::vector<nn::NamedParam> all_params();
  std::size_t parameter_count();

  bool head_has_pooling() const;
  const nn::Sequential& head_stages() const { return head_; }

  void init_backbone_random(std::uint64_t seed);
  void init_head(std::uint64_t seed);

 private:
  BackboneSpec spec_;
  HeadSpec head_spec_;
  std::vector<std::string> class_order_;
  nn::Sequential backbone_;
  nn::Sequential head_;
};

// init_mode semantics:
//   random            — seeded fresh backbone weights
//   generic_pretrained — backbone weights loaded from <pretrained_dir>/<name>.weights
//   transferred       — backbone weights copied from the artifact at source_dir
// The head is freshly initialized in every mode.
ClassifierModel assemble_classifier(const BackboneSpec& spec, std::vector<std::string> class_order,
                                    InitMode init_mode, std::uint64_t seed,
                                    const std::filesystem::path& source_dir = {},
                                    const std::filesystem::path& pretrained_dir = {});
ClassifierModel assemble_classifier(const BackboneSpec& spec, int num_classes, InitMode init_mode,
                                    std::uint64_t seed,
                                    const std::filesystem::path& source_dir = {},
                                    const std::filesystem::path& pretrained_dir = {});

// Copies every backbone parameter of the artifact at source_dir into target,
// bit for bit. Head parameters are left as target already has them.
void transfer_backbone_weights(const std::filesystem::path& source_dir, ClassifierModel& target);

// ---------------------------------------------------------------------------
// Artifact directory: meta.json + weights.bin (+ training_log.csv).
// ---------------------------------------------------------------------------

struct ArtifactMeta {
  int format_version = 1;
  std::string backbone;
  int input_resolution = 0;
  std::string preprocessing_id;
  std::vector<std::string> class_order;
  std::map<std::string, std::string> title_map;
  std::string system_provider_id;
  std::string system_display_name;
  std::vector<std::string> init_lineage;
  std::string training_config_json;  // embedded snapshot, opaque here
  int epochs_run = 0;
  std::string stop_reason;
  std::string weights_hash;
  std::size_t param_count = 0;
};

void save_artifact(const std::filesystem::path& dir, ClassifierModel& model, ArtifactMeta meta);
ArtifactMeta read_artifact_meta(const std::filesystem::path& dir);

// Loads weights.bin into the assembled model; verifies the recorded hash and
// that every expected tensor is present with the right shape.
void load_artifact_weights(const std::filesystem::path& dir, ClassifierModel& model,
                           bool verify_hash = true);

// Rebuilds the model described by an artifact directory and loads its
// weights, hash-verified.
ClassifierModel load_classifier_artifact(const std::filesystem::path& dir);

// Raw named-tensor io used by both artifacts and the pretrained-weight store.
void write_weights_file(const std::filesystem::path& file,
                        const std::vector<nn::NamedParam>& params);
std::map<std::string, nn::Tensor> read_weights_file(const std::filesystem::path& file);

}  // namespace gameid
