#include <benchmark/benchmark.h>

#include <random>

#include "scgen/condops.hpp"

using namespace scgen;

namespace {

Tensor<float> noise(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  Tensor<float> t(s);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = d(rng);
  return t;
}

// args: channels, spatial side
void BM_Conv2dForward(benchmark::State& state) {
  const auto c = state.range(0), s = state.range(1);
  const auto x = noise(Shape{8, c, s, s}, 1);
  const auto k = noise(Shape{c, c, 3, 3}, 2);
  for (auto _ : state) {
    Graph<float> g;
    benchmark::DoNotOptimize(conv2d(g.constant(x), g.constant(k), std::optional<Var<float>>{}, 1, 1).value().data());
  }
  state.SetItemsProcessed(state.iterations() * 8 * c * c * 9 * s * s);
}
BENCHMARK(BM_Conv2dForward)->Args({16, 32})->Args({32, 32})->Args({64, 16});

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = state.range(0), s = state.range(1);
  const auto x = noise(Shape{8, c, s, s}, 3);
  const auto k = noise(Shape{c, c, 3, 3}, 4);
  for (auto _ : state) {
    Graph<float> g;
    const auto xv = g.variable(x);
    const auto kv = g.variable(k);
    g.backward(sum(conv2d(xv, kv, std::optional<Var<float>>{}, 1, 1)));
    benchmark::DoNotOptimize(g.grad(kv.id).data());
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 32})->Args({32, 32});

struct SccInputs {
  Tensor<float> features, vectors;
  std::vector<Tensor<float>> kernels, biases;
};

SccInputs scc_inputs(std::int64_t n, std::int64_t c, std::int64_t s) {
  SccInputs in{noise(Shape{4, c, s, s}, 5), {}, {}, {}};
  Graph<float> g;
  in.vectors = semantic_gate(g.constant(noise(Shape{4, n, s, s}, 6)), GateMode::softmax, 1.0).values.value();
  for (std::int64_t i = 0; i < n; ++i) {
    in.kernels.push_back(noise(Shape{c, c, 3, 3}, 10 + static_cast<std::uint64_t>(i)));
    in.biases.push_back(noise(Shape{1, c, 1, 1}, 50 + static_cast<std::uint64_t>(i)));
  }
  return in;
}

// args: candidates, channels, side
void BM_SccForward(benchmark::State& state) {
  const auto in = scc_inputs(state.range(0), state.range(1), state.range(2));
  for (auto _ : state) {
    Graph<float> g;
    ConvCandidates<float> bank;
    for (std::size_t i = 0; i < in.kernels.size(); ++i) {
      bank.kernels.push_back(g.constant(in.kernels[i]));
      bank.biases.push_back(g.constant(in.biases[i]));
    }
    const SemanticVectorMap<float> v{g.constant(in.vectors), GateMode::softmax, 1.0};
    benchmark::DoNotOptimize(scc_forward(g.constant(in.features), v, bank).value().data());
  }
}
BENCHMARK(BM_SccForward)->Args({4, 16, 16})->Args({4, 32, 32})->Args({8, 16, 16});

void BM_SccReference(benchmark::State& state) {
  const auto in = scc_inputs(state.range(0), state.range(1), state.range(2));
  for (auto _ : state) {
    benchmark::DoNotOptimize(scc_reference(in.features, in.vectors, in.kernels, in.biases).data());
  }
}
BENCHMARK(BM_SccReference)->Args({4, 16, 16})->Args({8, 16, 16});

void BM_SemanticGate(benchmark::State& state) {
  const auto raw = noise(Shape{8, state.range(0), 32, 32}, 7);
  for (auto _ : state) {
    Graph<float> g;
    benchmark::DoNotOptimize(semantic_gate(g.constant(raw), GateMode::softmax, 5.0).values.value().data());
  }
}
BENCHMARK(BM_SemanticGate)->Arg(4)->Arg(19);

}  // namespace
