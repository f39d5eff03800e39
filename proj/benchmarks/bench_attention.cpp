#include <benchmark/benchmark.h>

#include "tfd/classifier.hpp"
#include "tfd/rng.hpp"
#include "tfd/tensor.hpp"

using tfd::Rng;
using tfd::Tensor;
namespace clf = tfd::clf;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<int64_t> shape, uint64_t seed) {
  Tensor<T> t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.uniform() * 2.0 - 1.0);
  return t;
}

// Training shape: 8 projected feature rows of width 1024, batch 32.
void BM_SelfAttentionForward(benchmark::State& state) {
  clf::SelfAttention<float> attn(1024);
  Rng rng(3);
  attn.init_params(rng);
  const Tensor<float> f = random_tensor<float>({32, 8, 1024}, 5);
  for (auto _ : state) {
    Tensor<float> y = attn.forward(f);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_SelfAttentionForward)->Unit(benchmark::kMillisecond);

void BM_SelfAttentionBackward(benchmark::State& state) {
  clf::SelfAttention<float> attn(1024);
  Rng rng(3);
  attn.init_params(rng);
  const Tensor<float> f = random_tensor<float>({32, 8, 1024}, 5);
  const Tensor<float> dy = random_tensor<float>({32, 8, 1024}, 7);
  attn.forward(f);
  auto zero = [](const std::string&, Tensor<float>& g) { g.set_zero(); };
  for (auto _ : state) {
    attn.for_each_grad("attn", zero);
    Tensor<float> df = attn.backward(dy);
    benchmark::DoNotOptimize(df.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_SelfAttentionBackward)->Unit(benchmark::kMillisecond);

// The widest projection a classifier owns: first encoder block, 16384 -> 1024.
void BM_ProjectionForward(benchmark::State& state) {
  tfd::nn::Linear<float> proj(16384, 1024);
  Rng rng(11);
  proj.init_params(rng);
  const Tensor<float> x = random_tensor<float>({32, 16384}, 13);
  for (auto _ : state) {
    Tensor<float> y = proj.forward(x);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_ProjectionForward)->Unit(benchmark::kMillisecond);

void BM_ProjectionBackwardParamsOnly(benchmark::State& state) {
  tfd::nn::Linear<float> proj(16384, 1024);
  Rng rng(11);
  proj.init_params(rng);
  const Tensor<float> x = random_tensor<float>({32, 16384}, 13);
  const Tensor<float> dy = random_tensor<float>({32, 1024}, 17);
  proj.forward(x);
  for (auto _ : state) {
    proj.weight_grad().set_zero();
    proj.backward_params_only(dy);
    benchmark::DoNotOptimize(proj.weight().data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_ProjectionBackwardParamsOnly)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
