#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "gameid/backbones.hpp"
#include "gameid/error.hpp"
#include "gameid/image.hpp"
#include "support/synthetic.hpp"

using namespace gameid;
namespace ts = gameid::testsupport;
namespace fs = std::filesystem;

namespace {

struct RegistryRow {
  const char* name;
  int input;
  int w, y, z;     // 0,0,0 for 1-D
  int token_dim;   // 0 for 3-D
  double params_m;
  bool pooled;
};

// Frozen expected registry: published input resolutions, feature shapes and
// parameter counts for the thirteen architectures.
constexpr RegistryRow kExpected[] = {
    {"VGG16", 224, 7, 7, 512, 0, 138.4, true},
    {"ResNet50", 224, 7, 7, 2048, 0, 25.6, true},
    {"ResNet152", 224, 7, 7, 2048, 0, 60.4, true},
    {"MobileNet", 224, 7, 7, 1024, 0, 4.3, true},
    {"DenseNet169", 224, 7, 7, 1664, 0, 14.3, true},
    {"DenseNet201", 224, 7, 7, 1920, 0, 20.2, true},
    {"EfficientNetB0", 224, 7, 7, 1280, 0, 5.3, true},
    {"EfficientNetB2", 260, 9, 9, 1408, 0, 9.2, true},
    {"EfficientNetB3", 300, 10, 10, 1536, 0, 12.3, true},
    {"EfficientNetV2S", 384, 12, 12, 1280, 0, 21.6, true},
    {"ViT-B16", 224, 0, 0, 0, 768, 8.66, false},
    {"ViT-L32", 384, 0, 0, 0, 1024, 306.5, false},
    {"SwinT", 224, 7, 7, 768, 0, 28.3, true},
};

nn::Tensor random_batch(int b, int resolution, std::uint64_t seed) {
  nn::Tensor t({b, 3, resolution, resolution});
  SeededRng rng(seed);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

}  // namespace

TEST_CASE("registry matches the published architecture table exactly") {
  REQUIRE(backbone_registry().size() == 13);
  for (const auto& row : kExpected) {
    const BackboneSpec& spec = get_backbone_spec(row.name);
    CAPTURE(row.name);
    CHECK(spec.input_resolution == row.input);
    CHECK(spec.feature_shape.w == row.w);
    CHECK(spec.feature_shape.y == row.y);
    CHECK(spec.feature_shape.z == row.z);
    CHECK(spec.feature_shape.token_dim == row.token_dim);
    CHECK(spec.param_count_m == doctest::Approx(row.params_m).epsilon(0.05));
    CHECK(spec.pooled == row.pooled);
    CHECK(spec.pooled == !spec.feature_shape.is_1d());
  }
}

TEST_CASE("unknown architecture is rejected") {
  CHECK_THROWS_AS(get_backbone_spec("LeNet5"), Error);
  try {
    get_backbone_spec("LeNet5");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unknown_architecture);
  }
}

TEST_CASE("smallest registry backbone is MobileNet by published parameter count") {
  CHECK(smallest_backbone_spec().name == "MobileNet");
}

TEST_CASE("every backbone realizes its contracted feature shape") {
  for (const auto& spec : backbone_registry()) {
    CAPTURE(spec.name);
    ClassifierModel model = assemble_classifier(spec, 3, InitMode::random, 1);
    nn::FwdContext ctx;
    nn::Tensor feat = model.features(random_batch(1, spec.input_resolution, 99), ctx);
    if (spec.feature_shape.is_1d()) {
      REQUIRE(feat.shape.size() == 2);
      CHECK(feat.dim(1) == spec.feature_shape.token_dim);
    } else {
      REQUIRE(feat.shape.size() == 4);
      CHECK(feat.dim(1) == spec.feature_shape.z);
      CHECK(feat.dim(2) == spec.feature_shape.w);
      CHECK(feat.dim(3) == spec.feature_shape.y);
    }
  }
}

TEST_CASE("head assembly: output length, softmax normalization, pooling placement") {
  const BackboneSpec& eff = get_backbone_spec("EfficientNetV2S");
  const BackboneSpec& vit = get_backbone_spec("ViT-L32");

  for (int g : {2, 302, 1236}) {
    CAPTURE(g);
    ClassifierModel model = assemble_classifier(eff, g, InitMode::random, 3);
    nn::FwdContext ctx;
    nn::Tensor probs = model.probabilities(random_batch(1, eff.input_resolution, 5), ctx);
    REQUIRE(probs.dim(1) == g);
    double sum = 0.0;
    float mn = 1.0f;
    for (float p : probs.data) {
      sum += p;
      mn = std::min(mn, p);
    }
    CHECK(mn >= 0.0f);
    CHECK(std::abs(sum - 1.0) <= 1e-5);
    CHECK(model.head_has_pooling());
  }

  ClassifierModel vit_model = assemble_classifier(vit, 5, InitMode::random, 3);
  CHECK_FALSE(vit_model.head_has_pooling());
  nn::FwdContext ctx;
  nn::Tensor probs = vit_model.probabilities(random_batch(2, vit.input_resolution, 6), ctx);
  REQUIRE(probs.dim(1) == 5);
  for (int i = 0; i < 2; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 5; ++j) sum += probs.data[static_cast<std::size_t>(i) * 5 + j];
    CHECK(std::abs(sum - 1.0) <= 1e-5);
  }
}

TEST_CASE("inference is deterministic: dropout inactive outside training") {
  const BackboneSpec& spec = get_backbone_spec("MobileNet");
  ClassifierModel model = assemble_classifier(spec, 4, InitMode::random, 11);
  nn::Tensor x = random_batch(2, spec.input_resolution, 21);
  nn::FwdContext ctx;
  nn::Tensor a = model.probabilities(x, ctx);
  nn::Tensor b = model.probabilities(x, ctx);
  CHECK(a.data == b.data);

  SeededRng rng1(3), rng2(4);
  nn::FwdContext t1{true, &rng1}, t2{true, &rng2};
  nn::Tensor ta = model.logits(x, t1);
  nn::Tensor tb = model.logits(x, t2);
  CHECK(ta.data != tb.data);  // dropout active in training mode
}

TEST_CASE("classifier requires at least two classes") {
  const BackboneSpec& spec = get_backbone_spec("MobileNet");
  CHECK_THROWS_AS(assemble_classifier(spec, 1, InitMode::random, 0), Error);
}

TEST_CASE("generic-pretrained mode errors without a weight store") {
  const BackboneSpec& spec = get_backbone_spec("MobileNet");
  try {
    assemble_classifier(spec, 3, InitMode::generic_pretrained, 0, {}, "/does/not/exist");
    FAIL("expected missing_pretrained_weights");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::missing_pretrained_weights);
  }
}

TEST_CASE("generic-pretrained mode loads backbone tensors from a weight store") {
  const fs::path tmp = ts::make_temp_dir("pretrained");
  const BackboneSpec& spec = get_backbone_spec("MobileNet");

  ClassifierModel donor = assemble_classifier(spec, 7, InitMode::random, 77);
  write_weights_file(tmp / (spec.name + ".weights"), donor.backbone_params());

  ClassifierModel loaded = assemble_classifier(spec, 3, InitMode::generic_pretrained, 1, {}, tmp);
  auto a = donor.backbone_params();
  auto b = loaded.backbone_params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value->data == b[i].value->data);
}

TEST_CASE("transfer copies backbone weights bit-for-bit and reinitializes the head") {
  const fs::path tmp = ts::make_temp_dir("transfer");
  const BackboneSpec& spec = get_backbone_spec("EfficientNetB3");

  ClassifierModel source = assemble_classifier(spec, 12, InitMode::random, 5);
  ArtifactMeta meta;
  meta.init_lineage = {"random"};
  save_artifact(tmp / "src", source, meta);

  ClassifierModel target = assemble_classifier(spec, 302, InitMode::transferred, 9, tmp / "src");
  CHECK(target.num_classes() == 302);

  auto sp = source.backbone_params();
  auto tp = target.backbone_params();
  REQUIRE(sp.size() == tp.size());
  for (std::size_t i = 0; i < sp.size(); ++i) {
    CHECK(sp[i].name == tp[i].name);
    REQUIRE(sp[i].value->data.size() == tp[i].value->data.size());
    CHECK(std::memcmp(sp[i].value->data.data(), tp[i].value->data.data(),
                      sp[i].value->data.size() * sizeof(float)) == 0);
  }

  // head dims follow the new class count and differ from source
  auto th = target.head_params();
  bool found_dense = false;
  for (const auto& p : th) {
    if (p.name == "head.dense.weight") {
      found_dense = true;
      CHECK(p.value->dim(0) == 302);
    }
  }
  CHECK(found_dense);

  // features agree elementwise on a fixed image
  nn::Tensor x = random_batch(1, spec.input_resolution, 123);
  nn::FwdContext ctx;
  nn::Tensor fa = source.features(x, ctx);
  nn::Tensor fb = target.features(x, ctx);
  REQUIRE(fa.data.size() == fb.data.size());
  for (std::size_t i = 0; i < fa.data.size(); ++i)
    CHECK(std::abs(fa.data[i] - fb.data[i]) <= 1e-6f);
}

TEST_CASE("transfer between different architectures is rejected") {
  const fs::path tmp = ts::make_temp_dir("transfer_mismatch");
  ClassifierModel source =
      assemble_classifier(get_backbone_spec("DenseNet201"), 6, InitMode::random, 5);
  ArtifactMeta meta;
  save_artifact(tmp / "src", source, meta);

  ClassifierModel target =
      assemble_classifier(get_backbone_spec("EfficientNetB3"), 6, InitMode::random, 6);
  try {
    transfer_backbone_weights(tmp / "src", target);
    FAIL("expected backbone_mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::backbone_mismatch);
  }
}

TEST_CASE("transfer is idempotent") {
  const fs::path tmp = ts::make_temp_dir("transfer_idem");
  const BackboneSpec& spec = get_backbone_spec("MobileNet");
  ClassifierModel source = assemble_classifier(spec, 5, InitMode::random, 1);
  ArtifactMeta meta;
  save_artifact(tmp / "src", source, meta);

  ClassifierModel target = assemble_classifier(spec, 8, InitMode::random, 2);
  transfer_backbone_weights(tmp / "src", target);
  std::vector<std::vector<float>> once;
  for (const auto& p : target.backbone_params()) once.push_back(p.value->data);
  transfer_backbone_weights(tmp / "src", target);
  auto params = target.backbone_params();
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i].value->data == once[i]);
}

TEST_CASE("preprocessing: resize and family normalization behave as recorded") {
  // 2x2 image, red and blue quadrants
  nn::Tensor img({3, 2, 2});
  img.data = {255, 0, 0, 0,   // R plane
              0, 0, 0, 0,     // G plane
              0, 255, 0, 0};  // B plane
  ImageBlob png = encode_png(img);

  // scale_pm1: values land in [-1, 1]
  nn::Tensor pm1 = preprocess_image(png, 32, "scale_pm1");
  REQUIRE(pm1.shape == std::vector<int>({3, 32, 32}));
  for (float v : pm1.data) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }

  // standardize_rgb: corner pixel of the red quadrant
  nn::Tensor std_rgb = preprocess_image(png, 2, "standardize_rgb");
  CHECK(std_rgb.data[0] == doctest::Approx((1.0 - 0.485) / 0.229).epsilon(1e-3));

  // mean_bgr reorders to BGR and subtracts channel means
  nn::Tensor bgr = preprocess_image(png, 2, "mean_bgr");
  // channel 0 is B: the red corner has B=0 -> -103.939
  CHECK(bgr.data[0] == doctest::Approx(-103.939).epsilon(1e-3));
  // channel 2 is R: red corner -> 255 - 123.68
  CHECK(bgr.data[2 * 4 + 0] == doctest::Approx(255.0 - 123.68).epsilon(1e-3));
}

TEST_CASE("grayscale images decode to three identical channels") {
  nn::Tensor gray({3, 4, 4});
  for (int i = 0; i < 16; ++i) {
    gray.data[static_cast<std::size_t>(i)] = static_cast<float>(i * 10);
    gray.data[16 + static_cast<std::size_t>(i)] = static_cast<float>(i * 10);
    gray.data[32 + static_cast<std::size_t>(i)] = static_cast<float>(i * 10);
  }
  ImageBlob png = encode_png(gray);
  nn::Tensor decoded = decode_image_rgb(png);
  REQUIRE(decoded.shape == std::vector<int>({3, 4, 4}));
  for (int i = 0; i < 16; ++i) {
    CHECK(decoded.data[static_cast<std::size_t>(i)] ==
          decoded.data[16 + static_cast<std::size_t>(i)]);
    CHECK(decoded.data[static_cast<std::size_t>(i)] ==
          decoded.data[32 + static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("undecodable bytes are reported as such") {
  ImageBlob junk{1, 2, 3, 4, 5};
  try {
    decode_image_rgb(junk);
    FAIL("expected undecodable_image");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::undecodable_image);
  }
}

TEST_CASE("artifact weight files round-trip and detect tampering") {
  const fs::path tmp = ts::make_temp_dir("artifact_io");
  const BackboneSpec& spec = get_backbone_spec("MobileNet");
  ClassifierModel model = assemble_classifier(spec, 4, InitMode::random, 31);
  ArtifactMeta meta;
  save_artifact(tmp / "a", model, meta);

  ClassifierModel restored = load_classifier_artifact(tmp / "a");
  auto pa = model.all_params();
  auto pb = restored.all_params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].value->data == pb[i].value->data);

  // flip one byte in weights.bin -> hash mismatch on load
  {
    std::fstream f(tmp / "a" / "weights.bin", std::ios::binary | std::ios::in | std::ios::out);
    f.seekg(64);
    char c;
    f.get(c);
    f.seekp(64);
    f.put(static_cast<char>(c ^ 0x1));
  }
  try {
    load_classifier_artifact(tmp / "a");
    FAIL("expected hash_mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::hash_mismatch);
  }
}
