#include "gameid/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <map>

#include "gameid/error.hpp"

namespace gameid {

namespace {

// ImageNet channel statistics (RGB) and the classic BGR channel means used by
// the VGG/ResNet preprocessing lineage.
const std::map<std::string, Normalization> kNormalizations = {
    {"scale_pm1", {Normalization::Kind::scale_pm1, {0, 0, 0}, {1, 1, 1}}},
    {"standardize_rgb",
     {Normalization::Kind::standardize_rgb, {0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}}},
    {"mean_bgr", {Normalization::Kind::mean_bgr, {103.939f, 116.779f, 123.68f}, {1, 1, 1}}},
};

}  // namespace

const Normalization& normalization_for(const std::string& preprocessing_id) {
  auto it = kNormalizations.find(preprocessing_id);
  if (it == kNormalizations.end())
    raise(ErrorCode::invalid_argument, "unknown preprocessing id: " + preprocessing_id);
  return it->second;
}

nn::Tensor decode_image_rgb(const ImageBlob& bytes) {
  cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat img = cv::imdecode(raw, cv::IMREAD_COLOR);  // 3-channel BGR, palette/gray expanded
  if (img.empty()) raise(ErrorCode::undecodable_image, "image bytes could not be decoded");

  nn::Tensor out({3, img.rows, img.cols});
  const std::size_t plane = static_cast<std::size_t>(img.rows) * img.cols;
  for (int y = 0; y < img.rows; ++y) {
    const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * img.cols + x;
      out.data[0 * plane + idx] = row[x][2];  // R
      out.data[1 * plane + idx] = row[x][1];  // G
      out.data[2 * plane + idx] = row[x][0];  // B
    }
  }
  return out;
}

nn::Tensor resize_image(const nn::Tensor& chw, int out_size) {
  if (chw.shape.size() != 3 || chw.dim(0) != 3)
    raise(ErrorCode::invalid_argument, "resize expects [3,H,W]");
  const int h = chw.dim(1), w = chw.dim(2);
  if (h == out_size && w == out_size) return chw;

  nn::Tensor out({3, out_size, out_size});
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(out_size) * out_size;
  for (int c = 0; c < 3; ++c) {
    cv::Mat src(h, w, CV_32FC1, const_cast<float*>(chw.data.data()) + c * in_plane);
    cv::Mat dst(out_size, out_size, CV_32FC1, out.data.data() + c * out_plane);
    cv::resize(src, dst, dst.size(), 0, 0, cv::INTER_LINEAR);
  }
  return out;
}

nn::Tensor preprocess_image(const ImageBlob& bytes, int resolution, const std::string& preprocessing_id) {
  const Normalization& norm = normalization_for(preprocessing_id);
  nn::Tensor img = resize_image(decode_image_rgb(bytes), resolution);
  const std::size_t plane = static_cast<std::size_t>(resolution) * resolution;

  switch (norm.kind) {
    case Normalization::Kind::scale_pm1:
      for (auto& v : img.data) v = v / 127.5f - 1.0f;
      return img;
    case Normalization::Kind::standardize_rgb:
      for (int c = 0; c < 3; ++c) {
        float* p = img.data.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] / 255.0f - norm.mean[c]) / norm.stddev[c];
      }
      return img;
    case Normalization::Kind::mean_bgr: {
      // reorder RGB -> BGR, then subtract per-channel means
      nn::Tensor bgr({3, resolution, resolution});
      for (int c = 0; c < 3; ++c) {
        const float* src = img.data.data() + (2 - c) * plane;
        float* dst = bgr.data.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] - norm.mean[c];
      }
      return bgr;
    }
  }
  raise(ErrorCode::invalid_argument, "unhandled normalization kind");
}

ImageBlob encode_png(const nn::Tensor& chw) {
  if (chw.shape.size() != 3 || chw.dim(0) != 3)
    raise(ErrorCode::invalid_argument, "encode expects [3,H,W]");
  const int h = chw.dim(1), w = chw.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  cv::Mat img(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      auto clamp8 = [](float v) { return static_cast<std::uint8_t>(std::min(std::max(v, 0.0f), 255.0f)); };
      row[x][2] = clamp8(chw.data[0 * plane + idx]);
      row[x][1] = clamp8(chw.data[1 * plane + idx]);
      row[x][0] = clamp8(chw.data[2 * plane + idx]);
    }
  }
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", img, out)) raise(ErrorCode::io_error, "png encode failed");
  return out;
}

}  // namespace gameid
