#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gameid/nn.hpp"

using namespace gameid;
using namespace gameid::nn;

namespace {

// Scalar loss used by the finite-difference checks: sum of squares of the
// network output, L = 0.5 * sum(y^2), so dL/dy = y.
double half_sq_sum(const Tensor& y) {
  double s = 0.0;
  for (float v : y.data) s += 0.5 * static_cast<double>(v) * v;
  return s;
}

Tensor random_tensor(std::vector<int> shape, SeededRng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-scale, scale));
  return t;
}

// Central-difference gradient of half_sq_sum(net(x)) wrt every parameter and
// the input, compared against backprop.
void gradient_check(Sequential& net, const Tensor& x, double tol) {
  FwdContext train_ctx{true, nullptr};

  Tensor y = net.forward(x, train_ctx);
  Tensor dy = y;  // dL/dy = y
  for (auto& p : net.params()) p.grad->fill(0.0f);
  Tensor dx = net.backward(dy);

  const double eps = 1e-3;
  auto loss_at = [&]() {
    FwdContext eval_ctx;  // params changed between calls; no caching needed
    return half_sq_sum(net.forward(x, eval_ctx));
  };

  for (auto& p : net.params()) {
    auto rng = SeededRng::derive(7, "probe/" + p.name);
    const std::size_t probes = std::min<std::size_t>(10, p.value->data.size());
    for (std::size_t k = 0; k < probes; ++k) {
      const std::size_t i = rng.uniform_below(p.value->data.size());
      const float saved = p.value->data[i];
      p.value->data[i] = static_cast<float>(saved + eps);
      const double hi = loss_at();
      p.value->data[i] = static_cast<float>(saved - eps);
      const double lo = loss_at();
      p.value->data[i] = saved;
      const double numeric = (hi - lo) / (2 * eps);
      const double analytic = p.grad->data[i];
      CAPTURE(p.name);
      CHECK(std::abs(numeric - analytic) < tol * (1.0 + std::abs(numeric)));
    }
  }

  // input gradient, a few probes
  auto rng = SeededRng::derive(9, "probe/input");
  Tensor xcopy = x;
  for (int k = 0; k < 10; ++k) {
    const std::size_t i = rng.uniform_below(xcopy.data.size());
    const float saved = xcopy.data[i];
    FwdContext eval_ctx;
    xcopy.data[i] = static_cast<float>(saved + eps);
    const double hi = half_sq_sum(net.forward(xcopy, eval_ctx));
    xcopy.data[i] = static_cast<float>(saved - eps);
    const double lo = half_sq_sum(net.forward(xcopy, eval_ctx));
    xcopy.data[i] = saved;
    const double numeric = (hi - lo) / (2 * eps);
    const double analytic = dx.data[i];
    CHECK(std::abs(numeric - analytic) < tol * (1.0 + std::abs(numeric)));
  }
}

}  // namespace

TEST_CASE("conv2d forward matches a hand-computed 1x1 case") {
  Conv2d conv("c", 1, 1, 3, 2, 1);
  auto params = [&] {
    std::vector<NamedParam> out;
    conv.collect_params(out);
    return out;
  }();
  // identity-ish kernel: center tap 2, bias 0.5
  params[0].value->fill(0.0f);
  params[0].value->data[4] = 2.0f;
  params[1].value->data[0] = 0.5f;

  Tensor x({1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) x.data[static_cast<std::size_t>(i)] = static_cast<float>(i);
  FwdContext ctx;
  Tensor y = conv.forward(x, ctx);
  REQUIRE(y.shape == std::vector<int>({1, 1, 2, 2}));
  // stride-2, pad-1 center taps hit pixels (0,0),(0,2),(2,0),(2,2)
  CHECK(y.data[0] == doctest::Approx(2 * 0 + 0.5));
  CHECK(y.data[1] == doctest::Approx(2 * 2 + 0.5));
  CHECK(y.data[2] == doctest::Approx(2 * 8 + 0.5));
  CHECK(y.data[3] == doctest::Approx(2 * 10 + 0.5));
}

TEST_CASE("gradient check: conv + relu + pool + dense stack") {
  SeededRng rng(42);
  Sequential net;
  net.add(std::make_unique<Conv2d>("c1", 2, 3, 3, 2, 1));
  net.add(std::make_unique<ReLU>("r1"));
  net.add(std::make_unique<Conv2d>("c2", 3, 4, 1, 1, 0));
  net.add(std::make_unique<GlobalAvgPool>("gap"));
  net.add(std::make_unique<Dense>("fc", 4, 5));
  for (auto& p : net.params())
    for (auto& v : p.value->data) v = static_cast<float>(rng.uniform(-0.5, 0.5));

  Tensor x = random_tensor({2, 2, 6, 6}, rng);
  gradient_check(net, x, 2e-2);
}

TEST_CASE("gradient check: dense-only stack against finite differences") {
  SeededRng rng(43);
  Sequential net;
  net.add(std::make_unique<Dense>("fc1", 6, 4));
  net.add(std::make_unique<ReLU>("r"));
  net.add(std::make_unique<Dense>("fc2", 4, 3));
  for (auto& p : net.params())
    for (auto& v : p.value->data) v = static_cast<float>(rng.uniform(-0.8, 0.8));
  Tensor x = random_tensor({3, 6}, rng);
  gradient_check(net, x, 1e-2);
}

TEST_CASE("softmax rows are normalized and non-negative") {
  SeededRng rng(7);
  Tensor logits = random_tensor({4, 9}, rng, 6.0);
  Tensor probs = softmax(logits);
  for (int i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 9; ++j) {
      const float p = probs.data[static_cast<std::size_t>(i) * 9 + j];
      CHECK(p >= 0.0f);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) < 1e-5);
  }
}

TEST_CASE("softmax cross entropy gradient equals probs minus one-hot over batch") {
  Tensor logits({2, 3});
  logits.data = {0.2f, -0.1f, 1.0f, 2.0f, 0.0f, -1.0f};
  auto res = softmax_cross_entropy(logits, {2, 0});
  Tensor probs = softmax(logits);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * 3 + j;
      const double onehot = (i == 0 && j == 2) || (i == 1 && j == 0) ? 1.0 : 0.0;
      CHECK(res.dlogits.data[idx] ==
            doctest::Approx((probs.data[idx] - onehot) / 2.0).epsilon(1e-6));
    }
  const double expect_loss =
      -(std::log(probs.data[2]) + std::log(probs.data[3])) / 2.0;
  CHECK(res.loss == doctest::Approx(expect_loss).epsilon(1e-6));
}

TEST_CASE("adam matches a step-by-step reference on a single parameter") {
  // reference computed with the update rule in double precision
  AdamConfig cfg{0.1, 0.9, 0.999, 1e-7};
  Tensor w({1});
  w.data[0] = 1.0f;
  Tensor g({1});
  Adam adam(cfg);
  adam.attach({{"w", &w, &g}});

  double wm = 1.0, m = 0.0, v = 0.0;
  const double grads[4] = {0.5, -0.25, 0.125, 1.0};
  for (int t = 1; t <= 4; ++t) {
    g.data[0] = static_cast<float>(grads[t - 1]);
    adam.step(cfg.lr);

    m = cfg.beta1 * m + (1 - cfg.beta1) * grads[t - 1];
    v = cfg.beta2 * v + (1 - cfg.beta2) * grads[t - 1] * grads[t - 1];
    const double mhat = m / (1 - std::pow(cfg.beta1, t));
    const double vhat = v / (1 - std::pow(cfg.beta2, t));
    wm -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    CHECK(w.data[0] == doctest::Approx(wm).epsilon(1e-5));
  }
}

TEST_CASE("dropout only acts in training mode and inference is repeatable") {
  Dropout drop("d", 0.5);
  SeededRng rng(11);
  Tensor x = random_tensor({1, 32}, rng);

  FwdContext eval_ctx;
  Tensor y1 = drop.forward(x, eval_ctx);
  Tensor y2 = drop.forward(x, eval_ctx);
  CHECK(y1.data == x.data);
  CHECK(y1.data == y2.data);

  SeededRng drop_rng(5);
  FwdContext train_ctx{true, &drop_rng};
  Tensor yt = drop.forward(x, train_ctx);
  int zeros = 0;
  for (std::size_t i = 0; i < yt.data.size(); ++i) {
    if (yt.data[i] == 0.0f)
      ++zeros;
    else
      CHECK(yt.data[i] == doctest::Approx(x.data[i] * 2.0f));
  }
  CHECK(zeros > 0);
  CHECK(zeros < 32);
}

TEST_CASE("seeded rng is deterministic and uniform_below stays in range") {
  SeededRng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  SeededRng c(9);
  for (int i = 0; i < 1000; ++i) CHECK(c.uniform_below(7) < 7);

  std::vector<int> v1{1, 2, 3, 4, 5, 6}, v2{1, 2, 3, 4, 5, 6};
  SeededRng s1(55), s2(55);
  s1.shuffle(v1);
  s2.shuffle(v2);
  CHECK(v1 == v2);
}
