#include "gameid/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gameid/error.hpp"

namespace gameid::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

int conv_out_dim(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int padding)
    : Layer(std::move(name)),
      in_ch_(in_ch),
      out_ch_(out_ch),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      weight_({out_ch, in_ch * kernel * kernel}),
      bias_({out_ch}),
      wgrad_({out_ch, in_ch * kernel * kernel}),
      bgrad_({out_ch}) {}

void Conv2d::init_he_uniform(SeededRng& rng) {
  const int fan_in = in_ch_ * kernel_ * kernel_;
  const double limit = std::sqrt(6.0 / fan_in);
  for (auto& w : weight_.data) w = static_cast<float>(rng.uniform(-limit, limit));
  bias_.fill(0.0f);
}

std::vector<int> Conv2d::output_shape(const std::vector<int>& in) const {
  return {in[0], out_ch_, conv_out_dim(in[2], kernel_, stride_, padding_),
          conv_out_dim(in[3], kernel_, stride_, padding_)};
}

void Conv2d::im2col(const float* img, int h, int w, int oh, int ow, float* cols) const {
  const int kk = kernel_ * kernel_;
  for (int c = 0; c < in_ch_; ++c) {
    const float* src = img + static_cast<std::size_t>(c) * h * w;
    for (int k = 0; k < kk; ++k) {
      const int ky = k / kernel_, kx = k % kernel_;
      float* dst = cols + (static_cast<std::size_t>(c) * kk + k) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        const int iy = oy * stride_ + ky - padding_;
        if (iy < 0 || iy >= h) {
          std::memset(dst + static_cast<std::size_t>(oy) * ow, 0, sizeof(float) * ow);
          continue;
        }
        for (int ox = 0; ox < ow; ++ox) {
          const int ix = ox * stride_ + kx - padding_;
          dst[static_cast<std::size_t>(oy) * ow + ox] =
              (ix >= 0 && ix < w) ? src[static_cast<std::size_t>(iy) * w + ix] : 0.0f;
        }
      }
    }
  }
}

void Conv2d::col2im(const float* cols, int h, int w, int oh, int ow, float* img) const {
  const int kk = kernel_ * kernel_;
  for (int c = 0; c < in_ch_; ++c) {
    float* dst = img + static_cast<std::size_t>(c) * h * w;
    for (int k = 0; k < kk; ++k) {
      const int ky = k / kernel_, kx = k % kernel_;
      const float* src = cols + (static_cast<std::size_t>(c) * kk + k) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        const int iy = oy * stride_ + ky - padding_;
        if (iy < 0 || iy >= h) continue;
        for (int ox = 0; ox < ow; ++ox) {
          const int ix = ox * stride_ + kx - padding_;
          if (ix >= 0 && ix < w)
            dst[static_cast<std::size_t>(iy) * w + ix] += src[static_cast<std::size_t>(oy) * ow + ox];
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x, const FwdContext& ctx) {
  if (x.shape.size() != 4 || x.dim(1) != in_ch_)
    raise(ErrorCode::invalid_argument, "conv input shape mismatch in " + name_);
  if (ctx.train) cached_input_ = x;

  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = conv_out_dim(h, kernel_, stride_, padding_);
  const int ow = conv_out_dim(w, kernel_, stride_, padding_);
  const int ckk = in_ch_ * kernel_ * kernel_;

  Tensor y({b, out_ch_, oh, ow});
  std::vector<float> col_scratch(static_cast<std::size_t>(ckk) * oh * ow);

  CMapMat wmat(weight_.data.data(), out_ch_, ckk);
  const std::size_t img_in = static_cast<std::size_t>(in_ch_) * h * w;
  const std::size_t img_out = static_cast<std::size_t>(out_ch_) * oh * ow;

  for (int i = 0; i < b; ++i) {
    im2col(x.data.data() + i * img_in, h, w, oh, ow, col_scratch.data());
    CMapMat cols(col_scratch.data(), ckk, oh * ow);
    MapMat out(y.data.data() + i * img_out, out_ch_, oh * ow);
    out.noalias() = wmat * cols;
    for (int oc = 0; oc < out_ch_; ++oc) out.row(oc).array() += bias_.data[static_cast<std::size_t>(oc)];
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const Tensor& x = cached_input_;
  if (x.numel() == 0) raise(ErrorCode::invalid_argument, "conv backward without cached forward");

  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = grad_out.dim(2), ow = grad_out.dim(3);
  const int ckk = in_ch_ * kernel_ * kernel_;

  Tensor dx({b, in_ch_, h, w});
  CMapMat wmat(weight_.data.data(), out_ch_, ckk);
  MapMat dwmat(wgrad_.data.data(), out_ch_, ckk);

  const std::size_t img_in = static_cast<std::size_t>(in_ch_) * h * w;
  const std::size_t img_out = static_cast<std::size_t>(out_ch_) * oh * ow;
  std::vector<float> col_scratch(static_cast<std::size_t>(ckk) * oh * ow);
  std::vector<float> dcols(static_cast<std::size_t>(ckk) * oh * ow);

  for (int i = 0; i < b; ++i) {
    im2col(x.data.data() + i * img_in, h, w, oh, ow, col_scratch.data());
    CMapMat cols(col_scratch.data(), ckk, oh * ow);
    CMapMat dy(grad_out.data.data() + i * img_out, out_ch_, oh * ow);

    dwmat.noalias() += dy * cols.transpose();
    for (int oc = 0; oc < out_ch_; ++oc) bgrad_.data[static_cast<std::size_t>(oc)] += dy.row(oc).sum();

    MapMat dcmat(dcols.data(), ckk, oh * ow);
    dcmat.noalias() = wmat.transpose() * dy;
    col2im(dcols.data(), h, w, oh, ow, dx.data.data() + i * img_in);
  }
  return dx;
}

void Conv2d::collect_params(std::vector<NamedParam>& out) {
  out.push_back({name_ + ".weight", &weight_, &wgrad_});
  out.push_back({name_ + ".bias", &bias_, &bgrad_});
}

// ---------------------------------------------------------------------------
// ReLU / GlobalAvgPool / Dense / Dropout
// ---------------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, const FwdContext& ctx) {
  if (ctx.train) cached_input_ = x;
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    if (cached_input_.data[i] <= 0.0f) dx.data[i] = 0.0f;
  return dx;
}

std::vector<int> GlobalAvgPool::output_shape(const std::vector<int>& in) const {
  return {in[0], in[1]};
}

Tensor GlobalAvgPool::forward(const Tensor& x, const FwdContext& ctx) {
  if (ctx.train) cached_shape_ = x.shape;
  const int b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({b, c});
  for (int i = 0; i < b; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const float* src = x.data.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
      double acc = 0.0;
      for (int j = 0; j < hw; ++j) acc += src[j];
      y.data[static_cast<std::size_t>(i) * c + ch] = static_cast<float>(acc / hw);
    }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  const int b = cached_shape_[0], c = cached_shape_[1];
  const int hw = cached_shape_[2] * cached_shape_[3];
  Tensor dx(cached_shape_);
  for (int i = 0; i < b; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const float g = grad_out.data[static_cast<std::size_t>(i) * c + ch] / static_cast<float>(hw);
      float* dst = dx.data.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
      for (int j = 0; j < hw; ++j) dst[j] = g;
    }
  return dx;
}

Dense::Dense(std::string name, int in_features, int out_features)
    : Layer(std::move(name)),
      in_f_(in_features),
      out_f_(out_features),
      weight_({out_features, in_features}),
      bias_({out_features}),
      wgrad_({out_features, in_features}),
      bgrad_({out_features}) {}

void Dense::init_glorot_uniform(SeededRng& rng) {
  const double limit = std::sqrt(6.0 / (in_f_ + out_f_));
  for (auto& w : weight_.data) w = static_cast<float>(rng.uniform(-limit, limit));
  bias_.fill(0.0f);
}

void Dense::init_he_uniform(SeededRng& rng) {
  const double limit = std::sqrt(6.0 / in_f_);
  for (auto& w : weight_.data) w = static_cast<float>(rng.uniform(-limit, limit));
  bias_.fill(0.0f);
}

std::vector<int> Dense::output_shape(const std::vector<int>& in) const {
  return {in[0], out_f_};
}

Tensor Dense::forward(const Tensor& x, const FwdContext& ctx) {
  if (x.shape.size() != 2 || x.dim(1) != in_f_)
    raise(ErrorCode::invalid_argument, "dense input shape mismatch in " + name_);
  if (ctx.train) cached_input_ = x;
  const int b = x.dim(0);
  Tensor y({b, out_f_});
  CMapMat xm(x.data.data(), b, in_f_);
  CMapMat wm(weight_.data.data(), out_f_, in_f_);
  MapMat ym(y.data.data(), b, out_f_);
  ym.noalias() = xm * wm.transpose();
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < out_f_; ++j) y.data[static_cast<std::size_t>(i) * out_f_ + j] += bias_.data[static_cast<std::size_t>(j)];
  return y;
}

Tensor Dense::backward(const Tensor& grad_out) {
  const int b = cached_input_.dim(0);
  Tensor dx({b, in_f_});
  CMapMat xm(cached_input_.data.data(), b, in_f_);
  CMapMat dym(grad_out.data.data(), b, out_f_);
  CMapMat wm(weight_.data.data(), out_f_, in_f_);
  MapMat dwm(wgrad_.data.data(), out_f_, in_f_);
  MapMat dxm(dx.data.data(), b, in_f_);

  dwm.noalias() += dym.transpose() * xm;
  for (int j = 0; j < out_f_; ++j) bgrad_.data[static_cast<std::size_t>(j)] += dym.col(j).sum();
  dxm.noalias() = dym * wm;
  return dx;
}

void Dense::collect_params(std::vector<NamedParam>& out) {
  out.push_back({name_ + ".weight", &weight_, &wgrad_});
  out.push_back({name_ + ".bias", &bias_, &bgrad_});
}

Tensor Dropout::forward(const Tensor& x, const FwdContext& ctx) {
  if (!ctx.train || rate_ <= 0.0) return x;
  if (ctx.rng == nullptr)
    raise(ErrorCode::invalid_argument, "dropout requires an rng in training mode");
  mask_ = Tensor(x.shape);
  const float keep_scale = static_cast<float>(1.0 / (1.0 - rate_));
  Tensor y = x;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    const bool keep = ctx.rng->uniform() >= rate_;
    mask_.data[i] = keep ? keep_scale : 0.0f;
    y.data[i] *= mask_.data[i];
  }
  return y;
}

Tensor Dropout::backward(const Tensor& grad_out) {
  if (mask_.numel() == 0) return grad_out;
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= mask_.data[i];
  return dx;
}

// ---------------------------------------------------------------------------
// Sequential
// ---------------------------------------------------------------------------

Tensor Sequential::forward(const Tensor& x, const FwdContext& ctx) {
  Tensor cur = x;
  for (auto& layer : layers_) cur = layer->forward(cur, ctx);
  return cur;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor cur = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

std::vector<NamedParam> Sequential::params() {
  std::vector<NamedParam> out;
  for (auto& layer : layers_) layer->collect_params(out);
  return out;
}

std::vector<int> Sequential::output_shape(std::vector<int> in) const {
  for (const auto& layer : layers_) in = layer->output_shape(in);
  return in;
}

// ---------------------------------------------------------------------------
// Softmax / loss / Adam
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
  const int b = logits.dim(0), g = logits.dim(1);
  Tensor probs({b, g});
  for (int i = 0; i < b; ++i) {
    const float* row = logits.data.data() + static_cast<std::size_t>(i) * g;
    float* out = probs.data.data() + static_cast<std::size_t>(i) * g;
    float mx = row[0];
    for (int j = 1; j < g; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < g; ++j) {
      const double e = std::exp(static_cast<double>(row[j]) - mx);
      out[j] = static_cast<float>(e);
      sum += e;
    }
    for (int j = 0; j < g; ++j) out[j] = static_cast<float>(out[j] / sum);
  }
  return probs;
}

LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const int b = logits.dim(0), g = logits.dim(1);
  if (static_cast<int>(labels.size()) != b)
    raise(ErrorCode::invalid_argument, "label count does not match batch");
  LossResult res;
  res.probs = softmax(logits);
  res.dlogits = res.probs;
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= g) raise(ErrorCode::invalid_argument, "label out of range");
    const double p = std::max(static_cast<double>(res.probs.data[static_cast<std::size_t>(i) * g + y]), 1e-12);
    loss -= std::log(p);
    res.dlogits.data[static_cast<std::size_t>(i) * g + y] -= 1.0f;
  }
  const float inv_b = 1.0f / static_cast<float>(b);
  for (auto& v : res.dlogits.data) v *= inv_b;
  res.loss = loss / b;
  return res;
}

void Adam::attach(const std::vector<NamedParam>& params) {
  params_ = params;
  m_.clear();
  v_.clear();
  for (const auto& p : params_) {
    m_.emplace_back(p.value->data.size(), 0.0f);
    v_.emplace_back(p.value->data.size(), 0.0f);
  }
  t_ = 0;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.grad->fill(0.0f);
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto& w = params_[pi].value->data;
    const auto& g = params_[pi].grad->data;
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = static_cast<float>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi);
      v[i] = static_cast<float>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
    }
  }
}

}  // namespace gameid::nn
