#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "tfd/error.hpp"
#include "tfd/nn/gradcheck.hpp"
#include "tfd/nn/layers.hpp"
#include "tfd/nn/losses.hpp"
#include "tfd/nn/optim.hpp"
#include "tfd/rng.hpp"
#include "tfd/tensor.hpp"

using tfd::Error;
using tfd::Rng;
using tfd::Tensor;
namespace nn = tfd::nn;

namespace {

void fill_uniform(Tensor<double>& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (int64_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * rng.uniform();
}

// Naive sliding-window cross-correlation with zero padding 1, stride 1.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                           const Tensor<double>& b) {
  const int64_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t cout = w.dim(0);
  Tensor<double> y({batch, cout, h, wd});
  for (int64_t n = 0; n < batch; ++n)
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < wd; ++j) {
          double s = b[co];
          for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t di = 0; di < 3; ++di)
              for (int64_t dj = 0; dj < 3; ++dj) {
                const int64_t si = i + di - 1, sj = j + dj - 1;
                if (si < 0 || si >= h || sj < 0 || sj >= wd) continue;
                s += w.at(co, ci, di, dj) * x.at(n, ci, si, sj);
              }
          y.at(n, co, i, j) = s;
        }
  return y;
}

// Scatter-add transposed convolution, kernel 2x2 stride 2, weights [Cin,Cout,2,2].
Tensor<double> tconv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                            const Tensor<double>& b) {
  const int64_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t cout = w.dim(1);
  Tensor<double> y({batch, cout, 2 * h, 2 * wd});
  for (int64_t n = 0; n < batch; ++n)
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t i = 0; i < 2 * h; ++i)
        for (int64_t j = 0; j < 2 * wd; ++j) y.at(n, co, i, j) = b[co];
  for (int64_t n = 0; n < batch; ++n)
    for (int64_t ci = 0; ci < cin; ++ci)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < wd; ++j)
          for (int64_t co = 0; co < cout; ++co)
            for (int64_t di = 0; di < 2; ++di)
              for (int64_t dj = 0; dj < 2; ++dj)
                y.at(n, co, 2 * i + di, 2 * j + dj) +=
                    x.at(n, ci, i, j) * w.at(ci, co, di, dj);
  return y;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Collects (name -> tensor) maps for a layer's parameters and gradients.
template <typename Layer>
void collect(Layer& layer, std::map<std::string, Tensor<double>*>& params,
             std::map<std::string, Tensor<double>*>& grads) {
  layer.for_each_param("p", [&](const std::string& n, Tensor<double>& t) { params[n] = &t; });
  layer.for_each_grad("p", [&](const std::string& n, Tensor<double>& t) { grads[n] = &t; });
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& c) {
  double s = 0.0;
  for (int64_t i = 0; i < y.size(); ++i) s += y[i] * c[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d identity kernel reproduces the input") {
  nn::Conv2d<double> conv(1, 1);
  conv.weight().set_zero();
  conv.weight().at(0, 0, 1, 1) = 1.0;  // center tap
  conv.bias().set_zero();
  Tensor<double> x = Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor<double> y = conv.forward(x);
  CHECK(max_abs_diff(y, x) == 0.0);
}

TEST_CASE("conv2d with zero kernel emits the bias everywhere") {
  nn::Conv2d<double> conv(2, 3);
  conv.weight().set_zero();
  conv.bias() = Tensor<double>::from({3}, {0.5, -1.25, 2.0});
  Tensor<double> x({2, 2, 4, 4});
  Rng rng(11);
  fill_uniform(x, rng);
  Tensor<double> y = conv.forward(x);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t co = 0; co < 3; ++co)
      for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 4; ++j)
          CHECK(y.at(n, co, i, j) == conv.bias()[co]);
}

TEST_CASE("conv2d matches the naive sliding-window oracle") {
  Rng rng(42);
  nn::Conv2d<double> conv(1, 1);
  fill_uniform(conv.weight(), rng);
  fill_uniform(conv.bias(), rng);
  Tensor<double> x({1, 1, 4, 4});
  fill_uniform(x, rng);
  Tensor<double> y = conv.forward(x);
  Tensor<double> ref = conv_oracle(x, conv.weight(), conv.bias());
  CHECK(max_abs_diff(y, ref) <= 1e-12);

  SUBCASE("multi-channel batch") {
    nn::Conv2d<double> conv2(3, 5);
    fill_uniform(conv2.weight(), rng);
    fill_uniform(conv2.bias(), rng);
    Tensor<double> x2({2, 3, 6, 6});
    fill_uniform(x2, rng);
    CHECK(max_abs_diff(conv2.forward(x2),
                       conv_oracle(x2, conv2.weight(), conv2.bias())) <= 1e-12);
  }
}

TEST_CASE("conv2d rejects a channel mismatch") {
  nn::Conv2d<double> conv(3, 4);
  Tensor<double> x({1, 2, 4, 4});
  CHECK_THROWS_AS(conv.forward(x), Error);
}

TEST_CASE("conv_transpose2d expands a single pixel into the kernel") {
  nn::ConvTranspose2d<double> tconv(1, 1);
  tconv.weight() = Tensor<double>::from({1, 1, 2, 2}, {1.5, -2.0, 0.25, 3.0});
  tconv.bias().set_zero();
  Tensor<double> x = Tensor<double>::from({1, 1, 1, 1}, {2.0});
  Tensor<double> y = tconv.forward(x);
  CHECK(y.at(0, 0, 0, 0) == 3.0);
  CHECK(y.at(0, 0, 0, 1) == -4.0);
  CHECK(y.at(0, 0, 1, 0) == 0.5);
  CHECK(y.at(0, 0, 1, 1) == 6.0);
}

TEST_CASE("conv_transpose2d on zero input emits the bias") {
  nn::ConvTranspose2d<double> tconv(2, 3);
  Rng rng(5);
  fill_uniform(tconv.weight(), rng);
  tconv.bias() = Tensor<double>::from({3}, {1.0, -0.5, 0.125});
  Tensor<double> x({1, 2, 3, 3});
  Tensor<double> y = tconv.forward(x);
  for (int64_t co = 0; co < 3; ++co)
    for (int64_t i = 0; i < 6; ++i)
      for (int64_t j = 0; j < 6; ++j)
        CHECK(y.at(0, co, i, j) == tconv.bias()[co]);
}

TEST_CASE("conv_transpose2d matches the scatter-add oracle") {
  Rng rng(77);
  nn::ConvTranspose2d<double> tconv(3, 2);
  fill_uniform(tconv.weight(), rng);
  fill_uniform(tconv.bias(), rng);
  Tensor<double> x({2, 3, 4, 4});
  fill_uniform(x, rng);
  CHECK(max_abs_diff(tconv.forward(x),
                     tconv_oracle(x, tconv.weight(), tconv.bias())) <= 1e-12);
}

TEST_CASE("maxpool2d reduces a single window to its maximum") {
  nn::MaxPool2d<double> pool;
  Tensor<double> x = Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor<double> y = pool.forward(x);
  CHECK(y.size() == 1);
  CHECK(y[0] == 4.0);
}

TEST_CASE("maxpool2d keeps constants constant and matches a naive oracle") {
  nn::MaxPool2d<double> pool;
  Tensor<double> c({1, 2, 4, 4});
  c.fill(3.25);
  Tensor<double> yc = pool.forward(c);
  for (int64_t i = 0; i < yc.size(); ++i) CHECK(yc[i] == 3.25);

  Rng rng(9);
  Tensor<double> x({1, 1, 4, 4});
  fill_uniform(x, rng);
  Tensor<double> y = pool.forward(x);
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 2; ++j) {
      const double m = std::max(std::max(x.at(0, 0, 2 * i, 2 * j), x.at(0, 0, 2 * i, 2 * j + 1)),
                                std::max(x.at(0, 0, 2 * i + 1, 2 * j), x.at(0, 0, 2 * i + 1, 2 * j + 1)));
      CHECK(y.at(0, 0, i, j) == m);
    }
}

TEST_CASE("maxpool2d rejects odd spatial dims and ties break to the first index") {
  nn::MaxPool2d<double> pool;
  Tensor<double> odd({1, 1, 3, 4});
  CHECK_THROWS_AS(pool.forward(odd), Error);

  // all four window entries equal: the whole gradient must land on index (0,0)
  Tensor<double> x = Tensor<double>::from({1, 1, 2, 2}, {7, 7, 7, 7});
  pool.forward(x);
  Tensor<double> dy = Tensor<double>::from({1, 1, 1, 1}, {5.0});
  Tensor<double> dx = pool.backward(dy);
  CHECK(dx.at(0, 0, 0, 0) == 5.0);
  CHECK(dx.at(0, 0, 0, 1) == 0.0);
  CHECK(dx.at(0, 0, 1, 0) == 0.0);
  CHECK(dx.at(0, 0, 1, 1) == 0.0);
}

TEST_CASE("batchnorm2d zero-variance channel maps to ~0, gamma=0 maps to beta") {
  nn::BatchNorm2d<double> bn(2);
  Tensor<double> x({3, 2, 2, 2});
  x.fill(4.0);
  Tensor<double> y = bn.forward(x, nn::Mode::kTrain);
  for (int64_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i]) <= 1e-3);

  nn::BatchNorm2d<double> bn2(2);
  bn2.gamma().set_zero();
  bn2.beta() = Tensor<double>::from({2}, {1.5, -2.5});
  Rng rng(3);
  Tensor<double> r({2, 2, 4, 4});
  fill_uniform(r, rng);
  Tensor<double> y2 = bn2.forward(r, nn::Mode::kTrain);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 2; ++c)
      for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 4; ++j)
          CHECK(y2.at(n, c, i, j) == bn2.beta()[c]);
}

TEST_CASE("batchnorm2d train mode matches the direct formula") {
  Rng rng(21);
  nn::BatchNorm2d<double> bn(3);
  fill_uniform(bn.gamma(), rng, 0.5, 1.5);
  fill_uniform(bn.beta(), rng);
  Tensor<double> x({4, 3, 2, 2});
  fill_uniform(x, rng, -2.0, 2.0);
  Tensor<double> y = bn.forward(x, nn::Mode::kTrain);

  const int64_t n = 4 * 2 * 2;
  for (int64_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int64_t b = 0; b < 4; ++b)
      for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 2; ++j) mean += x.at(b, c, i, j);
    mean /= n;
    double var = 0.0;
    for (int64_t b = 0; b < 4; ++b)
      for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 2; ++j) {
          const double d = x.at(b, c, i, j) - mean;
          var += d * d;
        }
    var /= n;  // biased
    for (int64_t b = 0; b < 4; ++b)
      for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 2; ++j) {
          const double want = (x.at(b, c, i, j) - mean) / std::sqrt(var + 1e-5) *
                                  bn.gamma()[c] + bn.beta()[c];
          CHECK(std::abs(y.at(b, c, i, j) - want) <= 1e-10);
        }
    // momentum-0.1 running update from the fresh (0, 1) state
    CHECK(bn.running_mean()[c] == doctest::Approx(0.1 * mean).epsilon(1e-12));
    CHECK(bn.running_var()[c] == doctest::Approx(0.9 + 0.1 * var).epsilon(1e-12));
  }
}

TEST_CASE("batchnorm2d eval mode uses running statistics") {
  Rng rng(8);
  nn::BatchNorm2d<double> bn(2);
  Tensor<double> x({8, 2, 2, 2});
  fill_uniform(x, rng, 0.0, 4.0);
  bn.forward(x, nn::Mode::kTrain);
  Tensor<double> probe({1, 2, 2, 2});
  fill_uniform(probe, rng);
  Tensor<double> y = bn.forward(probe, nn::Mode::kEval);
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t i = 0; i < 2; ++i)
      for (int64_t j = 0; j < 2; ++j) {
        const double want = (probe.at(0, c, i, j) - bn.running_mean()[c]) /
                            std::sqrt(bn.running_var()[c] + 1e-5);
        CHECK(y.at(0, c, i, j) == doctest::Approx(want).epsilon(1e-12));
      }
}

TEST_CASE("linear identity weight passes input through; zero weight broadcasts bias") {
  nn::Linear<double> lin(3, 3);
  lin.weight().set_zero();
  for (int64_t i = 0; i < 3; ++i) lin.weight().at(i, i) = 1.0;
  lin.bias().set_zero();
  Tensor<double> x = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(max_abs_diff(lin.forward(x), x) == 0.0);

  nn::Linear<double> zero(3, 2);
  zero.weight().set_zero();
  zero.bias() = Tensor<double>::from({2}, {0.75, -0.25});
  Tensor<double> y = zero.forward(x);
  for (int64_t b = 0; b < 2; ++b) {
    CHECK(y.at(b, 0) == 0.75);
    CHECK(y.at(b, 1) == -0.25);
  }
}

TEST_CASE("linear matches a triple-loop oracle") {
  Rng rng(13);
  nn::Linear<double> lin(7, 5);
  fill_uniform(lin.weight(), rng);
  fill_uniform(lin.bias(), rng);
  Tensor<double> x({4, 7});
  fill_uniform(x, rng);
  Tensor<double> y = lin.forward(x);
  for (int64_t b = 0; b < 4; ++b)
    for (int64_t o = 0; o < 5; ++o) {
      double s = lin.bias()[o];
      for (int64_t i = 0; i < 7; ++i) s += x.at(b, i) * lin.weight().at(o, i);
      CHECK(std::abs(y.at(b, o) - s) <= 1e-12);
    }
}

TEST_CASE("relu clamps negatives; softmax closed forms hold") {
  Tensor<double> x = Tensor<double>::from({3}, {-1, 0, 2});
  Tensor<double> y = nn::relu(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);

  Tensor<double> c({1, 4});
  c.fill(3.7);
  Tensor<double> sc = nn::softmax_lastdim(c);
  for (int64_t i = 0; i < 4; ++i) CHECK(sc[i] == doctest::Approx(0.25).epsilon(1e-12));

  Tensor<double> two = Tensor<double>::from({1, 2}, {0.0, std::log(3.0)});
  Tensor<double> st = nn::softmax_lastdim(two);
  CHECK(st[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(st[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to 1 and are shift-invariant") {
  Rng rng(17);
  Tensor<double> x({6, 9});
  fill_uniform(x, rng, -5.0, 5.0);
  Tensor<double> y = nn::softmax_lastdim(x);
  for (int64_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (int64_t i = 0; i < 9; ++i) {
      CHECK(y[r * 9 + i] >= 0.0);
      s += y[r * 9 + i];
    }
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }
  Tensor<double> shifted = x;
  for (int64_t r = 0; r < 6; ++r)
    for (int64_t i = 0; i < 9; ++i) shifted[r * 9 + i] += 100.0;
  CHECK(max_abs_diff(nn::softmax_lastdim(shifted), y) <= 1e-6);
}

TEST_CASE("dropout validates p, is identity in eval, and scales survivors") {
  CHECK_THROWS_AS(nn::Dropout<double>(-0.1), Error);
  CHECK_THROWS_AS(nn::Dropout<double>(1.0), Error);

  nn::Dropout<double> drop(0.5);
  Rng rng(23);
  Tensor<double> x({1000});
  fill_uniform(x, rng, 0.5, 1.5);
  Tensor<double> eval_out = drop.forward(x, nn::Mode::kEval, nullptr);
  CHECK(max_abs_diff(eval_out, x) == 0.0);

  Rng drop_rng(99);
  Tensor<double> y = drop.forward(x, nn::Mode::kTrain, &drop_rng);
  int64_t zeros = 0;
  for (int64_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0)
      ++zeros;
    else
      CHECK(y[i] == doctest::Approx(2.0 * x[i]).epsilon(1e-12));
  }
  CHECK(zeros > 400);
  CHECK(zeros < 600);

  // backward applies the same mask
  Tensor<double> dy({1000});
  dy.fill(1.0);
  Tensor<double> dx = drop.backward(dy);
  for (int64_t i = 0; i < y.size(); ++i) CHECK(dx[i] == (y[i] == 0.0 ? 0.0 : 2.0));
}

TEST_CASE("adam leaves parameters unchanged for zero gradients and lr=0") {
  Tensor<double> theta = Tensor<double>::from({3}, {1.0, -2.0, 0.5});
  Tensor<double> grad({3});
  nn::ParamStore<double> store;
  store.add("theta", &theta, &grad);

  nn::adam_step(store, 0.01);
  CHECK(theta[0] == 1.0);
  CHECK(theta[1] == -2.0);
  CHECK(theta[2] == 0.5);
  CHECK(store.step() == 1);

  grad.fill(0.3);
  nn::adam_step(store, 0.0);
  CHECK(theta[0] == 1.0);
  CHECK(theta[1] == -2.0);
  CHECK(theta[2] == 0.5);
}

TEST_CASE("adam first step moves a scalar by about -lr") {
  Tensor<double> theta = Tensor<double>::from({1}, {0.0});
  Tensor<double> grad = Tensor<double>::from({1}, {1.0});
  nn::ParamStore<double> store;
  store.add("theta", &theta, &grad);
  const double lr = 0.001;
  nn::adam_step(store, lr);
  // bias correction makes m-hat = v-hat = 1, so the step is lr/(1+eps)
  CHECK(theta[0] == doctest::Approx(-lr).epsilon(1e-6));
}

TEST_CASE("adam 3-step scalar trajectory matches a hand-rolled reference") {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double gs[3] = {1.0, -0.3, 0.7};

  double ref_theta = 0.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const double g = gs[t - 1];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    ref_theta -= lr * mh / (std::sqrt(vh) + eps);
  }

  Tensor<double> theta = Tensor<double>::from({1}, {0.5});
  Tensor<double> grad({1});
  nn::ParamStore<double> store;
  store.add("theta", &theta, &grad);
  for (int t = 0; t < 3; ++t) {
    grad[0] = gs[t];
    nn::adam_step(store, lr);
  }
  CHECK(std::abs(theta[0] - ref_theta) <= 1e-12);
}

TEST_CASE("adam reports the offending parameter on a non-finite gradient") {
  Tensor<double> theta = Tensor<double>::from({2}, {1.0, 2.0});
  Tensor<double> grad = Tensor<double>::from({2}, {0.1, std::nan("")});
  nn::ParamStore<double> store;
  store.add("mlp.hidden.w", &theta, &grad);
  try {
    nn::adam_step(store, 0.01);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("mlp.hidden.w") != std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks
// ---------------------------------------------------------------------------

TEST_CASE("gradcheck: linear layer within 1e-6") {
  Rng rng(31);
  nn::Linear<double> lin(6, 4);
  fill_uniform(lin.weight(), rng);
  fill_uniform(lin.bias(), rng);
  Tensor<double> x({3, 6});
  fill_uniform(x, rng);
  Tensor<double> c({3, 4});
  fill_uniform(c, rng);

  auto loss = [&]() { return weighted_sum(lin.forward(x), c); };

  std::map<std::string, Tensor<double>*> params, grads;
  collect(lin, params, grads);
  for (auto& [n, g] : grads) g->set_zero();
  lin.forward(x);
  Tensor<double> dx = lin.backward(c);

  for (auto& [name, p] : params)
    CHECK(nn::max_rel_error_central(loss, *p, *grads[name]) <= 1e-6);
  CHECK(nn::max_rel_error_central(loss, x, dx) <= 1e-6);
}

TEST_CASE("gradcheck: conv2d within 1e-5") {
  Rng rng(37);
  nn::Conv2d<double> conv(2, 3);
  fill_uniform(conv.weight(), rng, -0.5, 0.5);
  fill_uniform(conv.bias(), rng);
  Tensor<double> x({2, 2, 4, 4});
  fill_uniform(x, rng);
  Tensor<double> c({2, 3, 4, 4});
  fill_uniform(c, rng);

  auto loss = [&]() { return weighted_sum(conv.forward(x), c); };

  std::map<std::string, Tensor<double>*> params, grads;
  collect(conv, params, grads);
  for (auto& [n, g] : grads) g->set_zero();
  conv.forward(x);
  Tensor<double> dx = conv.backward(c);

  for (auto& [name, p] : params)
    CHECK(nn::max_rel_error_central(loss, *p, *grads[name]) <= 1e-5);
  CHECK(nn::max_rel_error_central(loss, x, dx) <= 1e-5);
}

TEST_CASE("gradcheck: conv_transpose2d within 1e-5") {
  Rng rng(41);
  nn::ConvTranspose2d<double> tconv(3, 2);
  fill_uniform(tconv.weight(), rng, -0.5, 0.5);
  fill_uniform(tconv.bias(), rng);
  Tensor<double> x({2, 3, 3, 3});
  fill_uniform(x, rng);
  Tensor<double> c({2, 2, 6, 6});
  fill_uniform(c, rng);

  auto loss = [&]() { return weighted_sum(tconv.forward(x), c); };

  std::map<std::string, Tensor<double>*> params, grads;
  collect(tconv, params, grads);
  for (auto& [n, g] : grads) g->set_zero();
  tconv.forward(x);
  Tensor<double> dx = tconv.backward(c);

  for (auto& [name, p] : params)
    CHECK(nn::max_rel_error_central(loss, *p, *grads[name]) <= 1e-5);
  CHECK(nn::max_rel_error_central(loss, x, dx) <= 1e-5);
}

TEST_CASE("gradcheck: batchnorm2d within 1e-5 in train mode") {
  Rng rng(43);
  nn::BatchNorm2d<double> bn(2);
  fill_uniform(bn.gamma(), rng, 0.5, 1.5);
  fill_uniform(bn.beta(), rng);
  Tensor<double> x({4, 2, 3, 3});
  fill_uniform(x, rng, -2.0, 2.0);
  Tensor<double> c({4, 2, 3, 3});
  fill_uniform(c, rng);

  auto loss = [&]() { return weighted_sum(bn.forward(x, nn::Mode::kTrain), c); };

  std::map<std::string, Tensor<double>*> params, grads;
  collect(bn, params, grads);
  for (auto& [n, g] : grads) g->set_zero();
  bn.forward(x, nn::Mode::kTrain);
  Tensor<double> dx = bn.backward(c);

  for (auto& [name, p] : params)
    CHECK(nn::max_rel_error_central(loss, *p, *grads[name]) <= 1e-5);
  CHECK(nn::max_rel_error_central(loss, x, dx) <= 1e-5);
}

TEST_CASE("gradcheck: maxpool2d and relu away from ties/kinks within 1e-6") {
  // values on a 0.05 grid, shuffled: window gaps far exceed the FD step
  Rng rng(47);
  std::vector<int> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Tensor<double> x({1, 1, 8, 8});
  for (int64_t i = 0; i < 64; ++i) x[i] = 0.05 * perm[static_cast<size_t>(i)] - 1.6;
  Tensor<double> c({1, 1, 4, 4});
  fill_uniform(c, rng);

  nn::MaxPool2d<double> pool;
  auto pool_loss = [&]() { return weighted_sum(pool.forward(x), c); };
  pool.forward(x);
  Tensor<double> dx = pool.backward(c);
  CHECK(nn::max_rel_error_central(pool_loss, x, dx) <= 1e-6);

  nn::ReLU<double> relu_layer;
  Tensor<double> xr({40});
  for (int64_t i = 0; i < 40; ++i) {
    const double mag = 0.01 + 0.99 * rng.uniform();
    xr[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  Tensor<double> cr({40});
  fill_uniform(cr, rng);
  auto relu_loss = [&]() { return weighted_sum(relu_layer.forward(xr), cr); };
  relu_layer.forward(xr);
  Tensor<double> dxr = relu_layer.backward(cr);
  CHECK(nn::max_rel_error_central(relu_loss, xr, dxr) <= 1e-6);
}

TEST_CASE("gradcheck: softmax, sigmoid, and seeded dropout within 1e-6") {
  Rng rng(53);
  Tensor<double> x({4, 5});
  fill_uniform(x, rng, -2.0, 2.0);
  Tensor<double> c({4, 5});
  fill_uniform(c, rng);

  auto soft_loss = [&]() { return weighted_sum(nn::softmax_lastdim(x), c); };
  Tensor<double> y = nn::softmax_lastdim(x);
  Tensor<double> dx = nn::softmax_backward_lastdim(y, c);
  CHECK(nn::max_rel_error_central(soft_loss, x, dx) <= 1e-6);

  nn::Sigmoid<double> sig;
  auto sig_loss = [&]() { return weighted_sum(sig.forward(x), c); };
  sig.forward(x);
  Tensor<double> dxs = sig.backward(c);
  CHECK(nn::max_rel_error_central(sig_loss, x, dxs) <= 1e-6);

  nn::Dropout<double> drop(0.3);
  auto drop_loss = [&]() {
    Rng r(1234);  // identical mask on every evaluation
    return weighted_sum(drop.forward(x, nn::Mode::kTrain, &r), c);
  };
  {
    Rng r(1234);
    drop.forward(x, nn::Mode::kTrain, &r);
  }
  Tensor<double> dxd = drop.backward(c);
  CHECK(nn::max_rel_error_central(drop_loss, x, dxd) <= 1e-6);
}

TEST_CASE("losses: mse and cross-entropy agree with closed forms and gradcheck") {
  Tensor<double> a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  Tensor<double> b = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  CHECK(nn::mse(a, b) == 0.0);
  b[3] = 2.0;  // one element off by 2 -> mse = 4/4
  CHECK(nn::mse(a, b) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(59);
  Tensor<double> pred({3, 4});
  Tensor<double> target({3, 4});
  fill_uniform(pred, rng);
  fill_uniform(target, rng);
  auto mse_loss = [&]() { return nn::mse(pred, target); };
  Tensor<double> g = nn::mse_backward(pred, target);
  CHECK(nn::max_rel_error_central(mse_loss, pred, g) <= 1e-6);

  Tensor<double> logits({4, 2});
  fill_uniform(logits, rng, -2.0, 2.0);
  std::vector<int> labels = {0, 1, 1, 0};
  // uniform logits -> ce = log(2)
  Tensor<double> flat({4, 2});
  flat.fill(0.7);
  CHECK(nn::cross_entropy(flat, labels) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  auto ce_loss = [&]() { return nn::cross_entropy(logits, labels); };
  Tensor<double> gce = nn::cross_entropy_backward(logits, labels);
  CHECK(nn::max_rel_error_central(ce_loss, logits, gce) <= 1e-6);
}

TEST_CASE("gradients accumulate across backward calls until zeroed") {
  Rng rng(61);
  nn::Linear<double> lin(3, 2);
  fill_uniform(lin.weight(), rng);
  fill_uniform(lin.bias(), rng);
  Tensor<double> x({2, 3});
  fill_uniform(x, rng);
  Tensor<double> dy({2, 2});
  dy.fill(1.0);

  std::map<std::string, Tensor<double>*> params, grads;
  collect(lin, params, grads);
  lin.forward(x);
  lin.backward(dy);
  const double once = (*grads["p.w"])[0];
  lin.forward(x);
  lin.backward(dy);
  CHECK((*grads["p.w"])[0] == doctest::Approx(2.0 * once).epsilon(1e-12));

  nn::ParamStore<double> store2;
  store2.add("w", params["p.w"], grads["p.w"]);
  store2.zero_grads();
  CHECK((*grads["p.w"])[0] == 0.0);
}
