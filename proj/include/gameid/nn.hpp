#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gameid/rng.hpp"

namespace gameid::nn {

// Dense row-major float tensor. Layout for images is [B, C, H, W].
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) { data.assign(numel(), 0.0f); }

  std::size_t numel() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  void fill(float v) { std::fill(data.begin(), data.end(), v); }
};

struct FwdContext {
  bool train = false;
  SeededRng* rng = nullptr;  // required when train=true and dropout is present
};

struct NamedParam {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& x, const FwdContext& ctx) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_params(std::vector<NamedParam>& out) { (void)out; }
  virtual std::vector<int> output_shape(const std::vector<int>& in) const = 0;

  const std::string& name() const { return name_; }

 protected:
  std::string name_;
};

class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int padding);

  void init_he_uniform(SeededRng& rng);
  Tensor forward(const Tensor& x, const FwdContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<NamedParam>& out) override;
  std::vector<int> output_shape(const std::vector<int>& in) const override;

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

 private:
  int in_ch_, out_ch_, kernel_, stride_, padding_;
  Tensor weight_;  // [out_ch, in_ch * k * k]
  Tensor bias_;    // [out_ch]
  Tensor wgrad_, bgrad_;
  Tensor cached_input_;

  void im2col(const float* img, int h, int w, int oh, int ow, float* cols) const;
  void col2im(const float* cols, int h, int w, int oh, int ow, float* img) const;
};

class ReLU : public Layer {
 public:
  explicit ReLU(std::string name) : Layer(std::move(name)) {}
  Tensor forward(const Tensor& x, const FwdContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<int> output_shape(const std::vector<int>& in) const override { return in; }

 private:
  Tensor cached_input_;
};

// [B, C, H, W] -> [B, C]. Inference passes keep no state, so a frozen model
// can serve concurrent forward calls.
class GlobalAvgPool : public Layer {
 public:
  explicit GlobalAvgPool(std::string name) : Layer(std::move(name)) {}
  Tensor forward(const Tensor& x, const FwdContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<int> output_shape(const std::vector<int>& in) const override;

 private:
  std::vector<int> cached_shape_;
};

class Dense : public Layer {
 public:
  Dense(std::string name, int in_features, int out_features);

  void init_glorot_uniform(SeededRng& rng);
  void init_he_uniform(SeededRng& rng);
  Tensor forward(const Tensor& x, const FwdContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<NamedParam>& out) override;
  std::vector<int> output_shape(const std::vector<int>& in) const override;

  int in_features() const { return in_f_; }
  int out_features() const { return out_f_; }

 private:
  int in_f_, out_f_;
  Tensor weight_;  // [out, in]
  Tensor bias_;    // [out]
  Tensor wgrad_, bgrad_;
  Tensor cached_input_;
};

// Inverted dropout; identity outside training.
class Dropout : public Layer {
 public:
  Dropout(std::string name, double rate) : Layer(std::move(name)), rate_(rate) {}
  Tensor forward(const Tensor& x, const FwdContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<int> output_shape(const std::vector<int>& in) const override { return in; }
  double rate() const { return rate_; }

 private:
  double rate_;
  Tensor mask_;
};

class Sequential {
 public:
  Sequential() = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  Tensor forward(const Tensor& x, const FwdContext& ctx);
  Tensor backward(const Tensor& grad_out);
  std::vector<NamedParam> params();
  std::vector<int> output_shape(std::vector<int> in) const;
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Numerically stable softmax over the last axis of [B, G].
Tensor softmax(const Tensor& logits);

struct LossResult {
  double loss;     // mean cross-entropy over the batch
  Tensor dlogits;  // gradient wrt logits (scaled by 1/B)
  Tensor probs;
};

LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void attach(const std::vector<NamedParam>& params);
  void zero_grad();
  void step(double lr);
  std::int64_t iterations() const { return t_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<NamedParam> params_;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace gameid::nn
