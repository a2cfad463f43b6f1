#include <benchmark/benchmark.h>

#include "sgsasr/data.hpp"
#include "sgsasr/decoder.hpp"
#include "sgsasr/flops.hpp"
#include "sgsasr/model.hpp"
#include "sgsasr/training.hpp"

using namespace sgsasr;

namespace {

Image synth(int size, std::uint64_t seed) {
  data::SynthSpec spec;
  spec.height = spec.width = size;
  Rng rng(seed);
  return data::synth_spacecraft_image(spec, rng);
}

}  // namespace

static void BM_Features(benchmark::State& state) {
  const Model m(ModelConfig::desk_profile(), 1);
  const Image lr = synth(48, 2);
  ag::NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(m.features(lr));
}
BENCHMARK(BM_Features)->Unit(benchmark::kMillisecond);

// Decoder only, 48x48 latents rendered at scale range(0).
static void BM_DecodeImage(benchmark::State& state) {
  const Model m(ModelConfig::desk_profile(), 1);
  const Image lr = synth(48, 2);
  ag::NoGradGuard g;
  const ag::Var feats = m.features(lr);
  const auto [h, w] = output_size(48, 48, static_cast<double>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(decoder::decode_image(feats, h, w, m.params(), m.config().decoder));
  }
  state.counters["pixels/s"] =
      benchmark::Counter(static_cast<double>(h) * w, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_DecodeImage)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_Upscale(benchmark::State& state) {
  const Model m(ModelConfig::desk_profile(), 1);
  const Image lr = synth(48, 2);
  for (auto _ : state) benchmark::DoNotOptimize(m.upscale(lr, 4.0));
}
BENCHMARK(BM_Upscale)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  Model m(ModelConfig::desk_profile(), 1);
  std::vector<Image> images;
  for (int i = 0; i < 8; ++i) images.push_back(synth(128, 10 + i));
  training::TrainConfig tc;
  tc.batch_size = static_cast<int>(state.range(0));
  tc.patch = 32;
  tc.base_lr = 1e-4;
  training::Trainer t(m, tc, images, 3);
  for (auto _ : state) benchmark::DoNotOptimize(t.step());
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

static void BM_CountFlops(benchmark::State& state) {
  const ModelConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(metrics::count_flops(cfg, 48, 48, 4.0));
}
BENCHMARK(BM_CountFlops);
BENCHMARK_MAIN();
