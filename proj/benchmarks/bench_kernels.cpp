#include <benchmark/benchmark.h>

#include "sgsasr/autograd.hpp"
#include "sgsasr/encoder.hpp"
#include "sgsasr/metrics.hpp"
#include "sgsasr/ops.hpp"
#include "sgsasr/rng.hpp"

using namespace sgsasr;

namespace {

Tensor filled(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(s);
  for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

// 3x3 same conv, C -> C channels on a 48x48 map.
static void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const ag::Var x(filled({1, c, 48, 48}, 1));
  const ag::Var w(filled({c, c, 3, 3}, 2));
  const ag::Var b(filled({1, c, 1, 1}, 3));
  ag::NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, {1, 1, 1}));
  state.counters["flop/s"] = benchmark::Counter(2.0 * c * c * 9 * 48 * 48, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32)->Arg(64);

static void BM_DepthwiseConv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const ag::Var x(filled({1, c, 48, 48}, 1));
  const ag::Var w(filled({c, 1, 3, 3}, 2));
  ag::NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, {}, {1, 1, c}));
}
BENCHMARK(BM_DepthwiseConv3x3)->Arg(64)->Arg(128);

static void BM_ConvForwardBackward(benchmark::State& state) {
  const ag::Var x(filled({1, 32, 48, 48}, 1), true);
  const ag::Var w(filled({32, 32, 3, 3}, 2), true);
  const ag::Var b(filled({1, 32, 1, 1}, 3), true);
  for (auto _ : state) {
    const ag::Var y = ops::conv2d(x, w, b, {1, 1, 1});
    ag::backward(ops::l1_loss(y, Tensor(y.shape())));
  }
}
BENCHMARK(BM_ConvForwardBackward);

static void BM_ChannelAttention(benchmark::State& state) {
  const ag::Var x(filled({1, 64, 48, 48}, 1));
  const ag::Var w(filled({64, 64, 1, 1}, 2));
  const ag::Var b(filled({1, 64, 1, 1}, 3));
  ag::NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(encoder::simplified_channel_attention(x, w, b));
}
BENCHMARK(BM_ChannelAttention);

static void BM_Ssim(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Image a = filled({1, 1, n, n}, 1);
  const Image b = filled({1, 1, n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(192);
