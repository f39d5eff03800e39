#include <benchmark/benchmark.h>

#include "tfd/nn/layers.hpp"
#include "tfd/rng.hpp"
#include "tfd/tensor.hpp"

using tfd::Rng;
using tfd::Tensor;
namespace nn = tfd::nn;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<int64_t> shape, uint64_t seed) {
  Tensor<T> t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.uniform() * 2.0 - 1.0);
  return t;
}

// First encoder conv at training shape: 16 channels over 64x64, batch 32.
void BM_Conv2dForward(benchmark::State& state) {
  nn::Conv2d<float> conv(16, 16);
  Rng rng(3);
  conv.init_params(rng);
  const Tensor<float> x = random_tensor<float>({32, 16, 64, 64}, 5);
  for (auto _ : state) {
    Tensor<float> y = conv.forward(x);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Conv2dForward)->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  nn::Conv2d<float> conv(16, 16);
  Rng rng(3);
  conv.init_params(rng);
  const Tensor<float> x = random_tensor<float>({32, 16, 64, 64}, 5);
  const Tensor<float> dy = random_tensor<float>({32, 16, 64, 64}, 7);
  conv.forward(x);
  for (auto _ : state) {
    Tensor<float> dx = conv.backward(dy);
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Conv2dBackward)->Unit(benchmark::kMillisecond);

void BM_ConvTranspose2dForward(benchmark::State& state) {
  nn::ConvTranspose2d<float> tconv(128, 64);
  Rng rng(11);
  tconv.init_params(rng);
  const Tensor<float> x = random_tensor<float>({32, 128, 4, 4}, 13);
  for (auto _ : state) {
    Tensor<float> y = tconv.forward(x);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_ConvTranspose2dForward)->Unit(benchmark::kMillisecond);

void BM_BatchNormForward(benchmark::State& state) {
  nn::BatchNorm2d<float> bn(16);
  const Tensor<float> x = random_tensor<float>({32, 16, 64, 64}, 17);
  for (auto _ : state) {
    Tensor<float> y = bn.forward(x, nn::Mode::kTrain);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_BatchNormForward)->Unit(benchmark::kMillisecond);

// Largest classifier projection: 16384 -> 1024 over a batch of 32.
void BM_LinearForward(benchmark::State& state) {
  nn::Linear<float> lin(16384, 1024);
  Rng rng(19);
  lin.init_params(rng);
  const Tensor<float> x = random_tensor<float>({32, 16384}, 23);
  for (auto _ : state) {
    Tensor<float> y = lin.forward(x);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_LinearForward)->Unit(benchmark::kMillisecond);

void BM_MaxPoolForward(benchmark::State& state) {
  nn::MaxPool2d<float> pool;
  const Tensor<float> x = random_tensor<float>({32, 16, 64, 64}, 29);
  for (auto _ : state) {
    Tensor<float> y = pool.forward(x);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_MaxPoolForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
