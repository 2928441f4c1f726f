#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gameid/nn.hpp"

namespace gameid {

using ImageBlob = std::vector<std::uint8_t>;

// Per-family input normalization applied after the resize. The constants are
// registry data keyed by preprocessing_id, not code baked into each backbone.
struct Normalization {
  enum class Kind { scale_pm1, standardize_rgb, mean_bgr };
  Kind kind;
  float mean[3];
  float stddev[3];
};

const Normalization& normalization_for(const std::string& preprocessing_id);

// Decodes PNG/JPEG bytes to RGB float [3, H, W] in 0..255. Grayscale and
// palette images are expanded to 3 channels.
nn::Tensor decode_image_rgb(const ImageBlob& bytes);

// Bilinear resize to a square target, no aspect-ratio preservation.
nn::Tensor resize_image(const nn::Tensor& chw, int out_size);

// decode -> resize -> normalize; the model-input pipeline.
nn::Tensor preprocess_image(const ImageBlob& bytes, int resolution, const std::string& preprocessing_id);

// Test/fixture helper: encode an RGB [3,H,W] 0..255 tensor as PNG bytes.
ImageBlob encode_png(const nn::Tensor& chw);

}  // namespace gameid
