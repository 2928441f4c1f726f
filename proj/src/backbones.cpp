#include "gameid/backbones.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

#include "gameid/error.hpp"
#include "gameid/sha256.hpp"

namespace gameid {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<BackboneSpec>& backbone_registry() {
  static const std::vector<BackboneSpec> registry = {
      {"VGG16", 224, {7, 7, 512, 0}, 138.4, "mean_bgr", true},
      {"ResNet50", 224, {7, 7, 2048, 0}, 25.6, "mean_bgr", true},
      {"ResNet152", 224, {7, 7, 2048, 0}, 60.4, "mean_bgr", true},
      {"MobileNet", 224, {7, 7, 1024, 0}, 4.3, "scale_pm1", true},
      {"DenseNet169", 224, {7, 7, 1664, 0}, 14.3, "standardize_rgb", true},
      {"DenseNet201", 224, {7, 7, 1920, 0}, 20.2, "standardize_rgb", true},
      {"EfficientNetB0", 224, {7, 7, 1280, 0}, 5.3, "standardize_rgb", true},
      {"EfficientNetB2", 260, {9, 9, 1408, 0}, 9.2, "standardize_rgb", true},
      {"EfficientNetB3", 300, {10, 10, 1536, 0}, 12.3, "standardize_rgb", true},
      {"EfficientNetV2S", 384, {12, 12, 1280, 0}, 21.6, "scale_pm1", true},
      {"ViT-B16", 224, {0, 0, 0, 768}, 8.66, "scale_pm1", false},
      {"ViT-L32", 384, {0, 0, 0, 1024}, 306.5, "scale_pm1", false},
      {"SwinT", 224, {7, 7, 768, 0}, 28.3, "standardize_rgb", true},
  };
  return registry;
}

const BackboneSpec& get_backbone_spec(const std::string& name) {
  for (const auto& spec : backbone_registry())
    if (spec.name == name) return spec;
  raise(ErrorCode::unknown_architecture, "unknown architecture: " + name);
}

const BackboneSpec& smallest_backbone_spec() {
  const BackboneSpec* best = nullptr;
  for (const auto& spec : backbone_registry())
    if (best == nullptr || spec.param_count_m < best->param_count_m) best = &spec;
  return *best;
}

const char* init_mode_name(InitMode mode) {
  switch (mode) {
    case InitMode::random: return "random";
    case InitMode::generic_pretrained: return "generic-pretrained";
    case InitMode::transferred: return "transferred";
  }
  return "random";
}

InitMode init_mode_from_name(const std::string& name) {
  if (name == "random") return InitMode::random;
  if (name == "generic-pretrained" || name == "imagenet") return InitMode::generic_pretrained;
  if (name == "transferred" || name == "arcade") return InitMode::transferred;
  raise(ErrorCode::invalid_argument, "unknown init mode: " + name);
}

// ---------------------------------------------------------------------------
// ClassifierModel
// ---------------------------------------------------------------------------

namespace {

// Compact trainable stand-ins honoring each registry contract: the input
// resolution maps to the published feature shape exactly. Five stride-2
// blocks take any of the Table resolutions to the published spatial grid
// (ceil-halving per block), then a 1x1 projection sets the channel depth.
void build_conv_backbone(nn::Sequential& seq, const BackboneSpec& spec) {
  const int channels[5] = {8, 16, 32, 64, 128};
  int in_ch = 3;
  for (int i = 0; i < 5; ++i) {
    seq.add(std::make_unique<nn::Conv2d>("backbone.conv" + std::to_string(i + 1), in_ch,
                                         channels[i], 3, 2, 1));
    seq.add(std::make_unique<nn::ReLU>("backbone.relu" + std::to_string(i + 1)));
    in_ch = channels[i];
  }
  seq.add(std::make_unique<nn::Conv2d>("backbone.proj", in_ch, spec.feature_shape.z, 1, 1, 0));
  seq.add(std::make_unique<nn::ReLU>("backbone.proj_relu"));
}

// Token backbones patchify, mix, aggregate tokens internally, and emit a 1-D
// embedding of the published dimension. The classification head then attaches
// no pooling stage.
void build_token_backbone(nn::Sequential& seq, const BackboneSpec& spec) {
  const int patch = spec.name == "ViT-L32" ? 32 : 16;
  const int embed = 64;
  seq.add(std::make_unique<nn::Conv2d>("backbone.patch_embed", 3, embed, patch, patch, 0));
  seq.add(std::make_unique<nn::ReLU>("backbone.patch_relu"));
  seq.add(std::make_unique<nn::Conv2d>("backbone.token_mix", embed, embed, 3, 1, 1));
  seq.add(std::make_unique<nn::ReLU>("backbone.token_relu"));
  seq.add(std::make_unique<nn::GlobalAvgPool>("backbone.token_mean"));
  seq.add(std::make_unique<nn::Dense>("backbone.token_proj", embed, spec.feature_shape.token_dim));
}

}  // namespace

ClassifierModel::ClassifierModel(const BackboneSpec& spec, HeadSpec head,
                                 std::vector<std::string> class_order)
    : spec_(spec), head_spec_(head), class_order_(std::move(class_order)) {
  if (head_spec_.num_classes < 2)
    raise(ErrorCode::invalid_argument, "classifier needs at least 2 classes");
  if (static_cast<int>(class_order_.size()) != head_spec_.num_classes)
    raise(ErrorCode::invariant_violation, "class_order size must equal num_classes");
  if (head_spec_.dropout_rate < 0.0 || head_spec_.dropout_rate >= 1.0)
    raise(ErrorCode::invalid_argument, "dropout rate out of range");

  if (spec_.feature_shape.is_1d())
    build_token_backbone(backbone_, spec_);
  else
    build_conv_backbone(backbone_, spec_);

  if (spec_.pooled) head_.add(std::make_unique<nn::GlobalAvgPool>("head.pool"));
  head_.add(std::make_unique<nn::Dropout>("head.dropout", head_spec_.dropout_rate));
  head_.add(std::make_unique<nn::Dense>("head.dense", spec_.feature_shape.feature_dim(),
                                        head_spec_.num_classes));

  // shape sanity: the built graph must realize the published contract
  const auto feat = backbone_.output_shape({1, 3, spec_.input_resolution, spec_.input_resolution});
  if (spec_.feature_shape.is_1d()) {
    if (feat.size() != 2 || feat[1] != spec_.feature_shape.token_dim)
      raise(ErrorCode::invariant_violation, "token backbone shape mismatch for " + spec_.name);
  } else {
    if (feat.size() != 4 || feat[1] != spec_.feature_shape.z || feat[2] != spec_.feature_shape.w ||
        feat[3] != spec_.feature_shape.y)
      raise(ErrorCode::invariant_violation, "conv backbone shape mismatch for " + spec_.name);
  }
}

nn::Tensor ClassifierModel::features(const nn::Tensor& batch, const nn::FwdContext& ctx) {
  return backbone_.forward(batch, ctx);
}

nn::Tensor ClassifierModel::logits(const nn::Tensor& batch, const nn::FwdContext& ctx) {
  return head_.forward(backbone_.forward(batch, ctx), ctx);
}

nn::Tensor ClassifierModel::probabilities(const nn::Tensor& batch, const nn::FwdContext& ctx) {
  return nn::softmax(logits(batch, ctx));
}

nn::Tensor ClassifierModel::backward(const nn::Tensor& dlogits, bool update_backbone) {
  nn::Tensor dfeat = head_.backward(dlogits);
  if (!update_backbone) return dfeat;
  return backbone_.backward(dfeat);
}

std::vector<nn::NamedParam> ClassifierModel::all_params() {
  auto params = backbone_.params();
  auto head = head_.params();
  params.insert(params.end(), head.begin(), head.end());
  return params;
}

std::size_t ClassifierModel::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : all_params()) n += p.value->numel();
  return n;
}

bool ClassifierModel::head_has_pooling() const {
  for (const auto& layer : head_.layers())
    if (dynamic_cast<const nn::GlobalAvgPool*>(layer.get()) != nullptr) return true;
  return false;
}

void ClassifierModel::init_backbone_random(std::uint64_t seed) {
  auto rng = SeededRng::derive(seed, "backbone-init/" + spec_.name);
  for (auto& layer : const_cast<std::vector<std::unique_ptr<nn::Layer>>&>(backbone_.layers())) {
    if (auto* conv = dynamic_cast<nn::Conv2d*>(layer.get())) conv->init_he_uniform(rng);
    if (auto* dense = dynamic_cast<nn::Dense*>(layer.get())) dense->init_he_uniform(rng);
  }
}

void ClassifierModel::init_head(std::uint64_t seed) {
  auto rng = SeededRng::derive(seed, "head-init");
  for (auto& layer : const_cast<std::vector<std::unique_ptr<nn::Layer>>&>(head_.layers()))
    if (auto* dense = dynamic_cast<nn::Dense*>(layer.get())) dense->init_glorot_uniform(rng);
}

ClassifierModel assemble_classifier(const BackboneSpec& spec, std::vector<std::string> class_order,
                                    InitMode init_mode, std::uint64_t seed,
                                    const std::filesystem::path& source_dir,
                                    const std::filesystem::path& pretrained_dir) {
  HeadSpec head{0.2, static_cast<int>(class_order.size())};
  ClassifierModel model(spec, head, std::move(class_order));
  model.init_head(seed);

  switch (init_mode) {
    case InitMode::random:
      model.init_backbone_random(seed);
      break;
    case InitMode::generic_pretrained: {
      const fs::path file = pretrained_dir / (spec.name + ".weights");
      if (pretrained_dir.empty() || !fs::exists(file))
        raise(ErrorCode::missing_pretrained_weights,
              "no pretrained weights for " + spec.name + " at " + file.string());
      auto tensors = read_weights_file(file);
      for (auto& p : model.backbone_params()) {
        auto it = tensors.find(p.name);
        if (it == tensors.end() || !it->second.same_shape(*p.value))
          raise(ErrorCode::corrupt_artifact, "pretrained store missing tensor " + p.name);
        *p.value = it->second;
      }
      break;
    }
    case InitMode::transferred:
      model.init_backbone_random(seed);  // overwritten below; keeps uninitialized reads impossible
      transfer_backbone_weights(source_dir, model);
      break;
  }
  return model;
}

ClassifierModel assemble_classifier(const BackboneSpec& spec, int num_classes, InitMode init_mode,
                                    std::uint64_t seed,
                                    const std::filesystem::path& source_dir,
                                    const std::filesystem::path& pretrained_dir) {
  std::vector<std::string> order;
  order.reserve(static_cast<std::size_t>(num_classes));
  for (int i = 0; i < num_classes; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "class_%04d", i);
    order.emplace_back(buf);
  }
  return assemble_classifier(spec, std::move(order), init_mode, seed, source_dir, pretrained_dir);
}

void transfer_backbone_weights(const std::filesystem::path& source_dir, ClassifierModel& target) {
  const ArtifactMeta meta = read_artifact_meta(source_dir);
  if (meta.backbone != target.spec().name)
    raise(ErrorCode::backbone_mismatch, "source backbone " + meta.backbone +
                                            " does not match target " + target.spec().name);
  auto tensors = read_weights_file(source_dir / "weights.bin");
  for (auto& p : target.backbone_params()) {
    auto it = tensors.find(p.name);
    if (it == tensors.end())
      raise(ErrorCode::corrupt_artifact, "source artifact missing tensor " + p.name);
    if (!it->second.same_shape(*p.value))
      raise(ErrorCode::corrupt_artifact, "source tensor shape mismatch for " + p.name);
    *p.value = it->second;
  }
}

// ---------------------------------------------------------------------------
// Artifact io
// ---------------------------------------------------------------------------

namespace {
constexpr char kWeightsMagic[4] = {'G', 'I', 'D', 'W'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void write_weights_file(const std::filesystem::path& file,
                        const std::vector<nn::NamedParam>& params) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::io_error, "cannot write " + file.string());
  out.write(kWeightsMagic, 4);
  write_pod<std::uint32_t>(out, 1u);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.value->shape.size()));
    for (int d : p.value->shape) write_pod<std::int32_t>(out, d);
    write_pod<std::uint64_t>(out, p.value->numel());
    out.write(reinterpret_cast<const char*>(p.value->data.data()),
              static_cast<std::streamsize>(p.value->data.size() * sizeof(float)));
  }
  if (!out) raise(ErrorCode::io_error, "short write to " + file.string());
}

std::map<std::string, nn::Tensor> read_weights_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) raise(ErrorCode::corrupt_artifact, "cannot open weights file " + file.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kWeightsMagic, 4) != 0)
    raise(ErrorCode::corrupt_artifact, "bad weights file magic in " + file.string());
  const auto version = read_pod<std::uint32_t>(in);
  if (version != 1u)
    raise(ErrorCode::schema_version_mismatch, "unsupported weights version " + std::to_string(version));
  const auto count = read_pod<std::uint32_t>(in);
  std::map<std::string, nn::Tensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto ndim = read_pod<std::uint32_t>(in);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = read_pod<std::int32_t>(in);
    const auto numel = read_pod<std::uint64_t>(in);
    nn::Tensor t(shape);
    if (t.numel() != numel)
      raise(ErrorCode::corrupt_artifact, "tensor size mismatch for " + name);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(numel * sizeof(float)));
    if (!in) raise(ErrorCode::corrupt_artifact, "truncated weights file " + file.string());
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

void save_artifact(const std::filesystem::path& dir, ClassifierModel& model, ArtifactMeta meta) {
  fs::create_directories(dir);
  write_weights_file(dir / "weights.bin", model.all_params());
  meta.weights_hash = "sha256:" + sha256_file_hex(dir / "weights.bin");
  meta.backbone = model.spec().name;
  meta.input_resolution = model.spec().input_resolution;
  meta.preprocessing_id = model.spec().preprocessing_id;
  meta.class_order = model.class_order();
  meta.param_count = model.parameter_count();

  json j;
  j["format_version"] = meta.format_version;
  j["backbone"] = meta.backbone;
  j["input_resolution"] = meta.input_resolution;
  j["preprocessing_id"] = meta.preprocessing_id;
  j["num_classes"] = meta.class_order.size();
  j["class_order"] = meta.class_order;
  j["title_map"] = meta.title_map;
  j["system"] = {{"provider_id", meta.system_provider_id},
                 {"display_name", meta.system_display_name}};
  j["init_lineage"] = meta.init_lineage;
  j["training"] = meta.training_config_json.empty() ? json::object()
                                                    : json::parse(meta.training_config_json);
  j["epochs_run"] = meta.epochs_run;
  j["stop_reason"] = meta.stop_reason;
  j["weights_hash"] = meta.weights_hash;
  j["param_count"] = meta.param_count;

  std::ofstream out(dir / "meta.json", std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) raise(ErrorCode::io_error, "cannot write meta.json in " + dir.string());
}

ArtifactMeta read_artifact_meta(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) raise(ErrorCode::corrupt_artifact, "missing meta.json in " + dir.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(ErrorCode::corrupt_artifact, std::string("meta.json parse error: ") + e.what());
  }
  ArtifactMeta meta;
  try {
    meta.format_version = j.at("format_version").get<int>();
    if (meta.format_version != 1)
      raise(ErrorCode::schema_version_mismatch,
            "unsupported artifact version " + std::to_string(meta.format_version));
    meta.backbone = j.at("backbone").get<std::string>();
    meta.input_resolution = j.at("input_resolution").get<int>();
    meta.preprocessing_id = j.at("preprocessing_id").get<std::string>();
    meta.class_order = j.at("class_order").get<std::vector<std::string>>();
    if (j.contains("title_map"))
      meta.title_map = j.at("title_map").get<std::map<std::string, std::string>>();
    if (j.contains("system")) {
      meta.system_provider_id = j["system"].value("provider_id", "");
      meta.system_display_name = j["system"].value("display_name", "");
    }
    if (j.contains("init_lineage"))
      meta.init_lineage = j.at("init_lineage").get<std::vector<std::string>>();
    if (j.contains("training") && !j["training"].is_null())
      meta.training_config_json = j["training"].dump();
    meta.epochs_run = j.value("epochs_run", 0);
    meta.stop_reason = j.value("stop_reason", "");
    meta.weights_hash = j.at("weights_hash").get<std::string>();
    meta.param_count = j.value("param_count", std::size_t{0});
  } catch (const json::exception& e) {
    raise(ErrorCode::corrupt_artifact, std::string("meta.json field error: ") + e.what());
  }
  return meta;
}

ClassifierModel load_classifier_artifact(const std::filesystem::path& dir) {
  const ArtifactMeta meta = read_artifact_meta(dir);
  const BackboneSpec& spec = get_backbone_spec(meta.backbone);
  if (meta.class_order.empty())
    raise(ErrorCode::corrupt_artifact, "artifact class_order is empty in " + dir.string());
  ClassifierModel model(spec, HeadSpec{0.2, static_cast<int>(meta.class_order.size())},
                        meta.class_order);
  load_artifact_weights(dir, model, true);
  return model;
}

void load_artifact_weights(const std::filesystem::path& dir, ClassifierModel& model,
                           bool verify_hash) {
  if (verify_hash) {
    const ArtifactMeta meta = read_artifact_meta(dir);
    const std::string actual = "sha256:" + sha256_file_hex(dir / "weights.bin");
    if (actual != meta.weights_hash)
      raise(ErrorCode::hash_mismatch, "weights.bin hash mismatch in " + dir.string());
  }
  auto tensors = read_weights_file(dir / "weights.bin");
  for (auto& p : model.all_params()) {
    auto it = tensors.find(p.name);
    if (it == tensors.end())
      raise(ErrorCode::corrupt_artifact, "artifact missing tensor " + p.name);
    if (!it->second.same_shape(*p.value))
      raise(ErrorCode::corrupt_artifact, "artifact tensor shape mismatch for " + p.name);
    *p.value = it->second;
  }
}

}  // namespace gameid
