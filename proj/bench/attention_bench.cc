// Local vs serial vs quadratic attention, and a full desk-model forward pass.
// Lengths are tokens per window; d_head matches the desk preset.

#include <benchmark/benchmark.h>

#include <random>

#include "cogscreen/attention/kernels.h"
#include "cogscreen/attention/model.h"

namespace {

using namespace cogscreen::attn;

constexpr int kHead = 32;
constexpr int kRadius = 16;

struct Inputs {
  RowMatrix q, k, v, out;
  AttentionPattern pattern;
  std::vector<double> probs;

  explicit Inputs(int n) : q(n, kHead), k(n, kHead), v(n, kHead), out(n, kHead) {
    std::mt19937_64 rng(n);
    std::normal_distribution<double> nd;
    for (auto* m : {&q, &k, &v}) {
      for (auto& x : m->reshaped()) x = nd(rng);
    }
    pattern = local_global_pattern(n, kRadius);
    probs.resize(pattern.nnz());
  }
};

const double kScale = 1.0 / std::sqrt(double(kHead));

void BM_LocalAttention(benchmark::State& state) {
  Inputs in(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    local_attention(in.q, in.k, in.v, in.pattern, kScale, in.out, in.probs);
    benchmark::DoNotOptimize(in.out.data());
  }
  state.SetComplexityN(state.range(0));
}

void BM_LocalAttentionSerial(benchmark::State& state) {
  Inputs in(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    local_attention_serial(in.q, in.k, in.v, in.pattern, kScale, in.out, in.probs);
    benchmark::DoNotOptimize(in.out.data());
  }
  state.SetComplexityN(state.range(0));
}

void BM_FullAttention(benchmark::State& state) {
  Inputs in(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    full_attention(in.q, in.k, in.v, kScale, in.out);
    benchmark::DoNotOptimize(in.out.data());
  }
  state.SetComplexityN(state.range(0));
}

void BM_ForwardWindow(benchmark::State& state) {
  AttnConfig c;
  c.vocab_size = 500;
  const AttnModel model(c, 1);
  std::vector<int> window(static_cast<std::size_t>(state.range(0)));
  std::mt19937_64 rng(5);
  for (auto& t : window) t = 3 + static_cast<int>(rng() % 497);
  for (auto _ : state) benchmark::DoNotOptimize(forward_window(model, window));
  state.SetComplexityN(state.range(0));
}

BENCHMARK(BM_LocalAttention)->RangeMultiplier(2)->Range(128, 4096)->Complexity(benchmark::oN);
BENCHMARK(BM_LocalAttentionSerial)->RangeMultiplier(2)->Range(128, 4096)->Complexity(benchmark::oN);
BENCHMARK(BM_FullAttention)->RangeMultiplier(2)->Range(128, 4096)->Complexity(benchmark::oNSquared);
BENCHMARK(BM_ForwardWindow)->RangeMultiplier(2)->Range(128, 4096)->Complexity(benchmark::oN)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
