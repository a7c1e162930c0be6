#include <benchmark/benchmark.h>

#include "inceptive/head.hpp"
#include "inceptive/layers.hpp"
#include "inceptive/ops.hpp"
#include "inceptive/training.hpp"

using namespace inceptive;

namespace {

Tensor filled(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = filled({n, n}, rng), b = filled({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_Conv1d(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor W = filled({32, k, 128}, rng), b = filled({32}, rng), H = filled({8, 64, 128}, rng);
  const ConvBranch branch = ConvBranch::with_kernel(k);
  for (auto _ : state) benchmark::DoNotOptimize(conv1d_forward(branch, W, b, H));
}
BENCHMARK(BM_Conv1d)->Arg(2)->Arg(3)->Arg(5)->Arg(7);

void BM_HeadForward(benchmark::State& state) {
  ModelConfig c;
  c.hidden_dim = 64;
  c.channels = 8;
  c.n_heads = 4;
  c.head_dim = 16;
  c.dense_dim = 64;
  c.n_classes = 4;
  c.variant = static_cast<Variant>(state.range(0));
  Rng rng(3);
  const ParamStore p = init_params(c, rng);
  BufferStore buf = init_buffers(c);
  const Tensor H = filled({16, 32, 64}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(head_forward(c, p, buf, H, Mode::eval, rng).logits);
  state.SetLabel(std::string(to_string(c.variant)));
}
BENCHMARK(BM_HeadForward)->Arg(0)->Arg(1)->Arg(2);

void BM_HeadTrainStep(benchmark::State& state) {
  ModelConfig c;
  c.hidden_dim = 64;
  c.channels = 8;
  c.n_heads = 4;
  c.head_dim = 16;
  c.dense_dim = 64;
  c.n_classes = 4;
  Rng rng(4);
  ParamStore p = init_params(c, rng);
  BufferStore buf = init_buffers(c);
  const Tensor H = filled({16, 32, 64}, rng);
  std::vector<std::uint32_t> y(16);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<std::uint32_t>(i % 4);
  for (auto _ : state) {
    p.zero_grad();
    HeadResult r = head_forward(c, p, buf, H, Mode::train, rng);
    benchmark::DoNotOptimize(head_backward(c, p, r.cache, softmax_cross_entropy(r.logits, y).dlogits));
  }
}
BENCHMARK(BM_HeadTrainStep);

}  // namespace

BENCHMARK_MAIN();
