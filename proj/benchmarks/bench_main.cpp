#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>
#include <random>

#include "vcgan/dsp/mel.hpp"
#include "vcgan/nets/model.hpp"
#include "vcgan/nn/ops.hpp"

using namespace vcgan;

namespace {

nn::Tensor<float> random_tensor(nn::Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  nn::Tensor<float> t(s);
  for (auto& v : t.data) v = d(rng);
  return t;
}

dsp::MelMatrix random_window(int bins, int frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  dsp::MelMatrix m(bins, frames);
  for (auto& v : m.values) v = d(rng);
  return m;
}

void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const nn::Var<float> x(random_tensor({4, c, 64, 32}, 1));
  const nn::Var<float> w(random_tensor({c, c, 3, 3}, 2));
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, w, nn::Var<float>(), {1, 1, 1, 1}).value().data.data());
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const auto xt = random_tensor({4, c, 64, 32}, 1), wt = random_tensor({c, c, 3, 3}, 2);
  const nn::Var<float> zero(nn::Tensor<float>({4, c, 64, 32}, 0.0f));
  for (auto _ : state) {
    nn::Var<float> x(xt, true), w(wt, true);
    nn::backward(nn::l1_mean(nn::conv2d(x, w, nn::Var<float>(), {1, 1, 1, 1}), zero));
    benchmark::DoNotOptimize(w.grad().data.data());
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_MelSpectrogram(benchmark::State& state) {
  const dsp::MelConfig cfg;
  dsp::Waveform w(static_cast<std::size_t>(state.range(0)) * cfg.sample_rate);
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = static_cast<float>(0.3 * std::sin(2 * std::numbers::pi * 220.0 * i / cfg.sample_rate));
  for (auto _ : state) benchmark::DoNotOptimize(dsp::mel_spectrogram(w, cfg).values.data());
}
BENCHMARK(BM_MelSpectrogram)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_GriffinLim(benchmark::State& state) {
  const dsp::MelConfig cfg;
  const auto lin = dsp::mel_to_linear(dsp::mel_spectrogram(dsp::Waveform(cfg.sample_rate, 0.1f), cfg), cfg);
  for (auto _ : state) benchmark::DoNotOptimize(dsp::griffin_lim(lin, cfg, 10).data());
}
BENCHMARK(BM_GriffinLim)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  nets::ArchConfig arch;
  if (state.range(0) == 0) {
    arch.fe_channels = {8, 16, 32, 1};
    arch.disc_channels = {8, 16, 32, 32};
  }
  const auto params = nets::init_params(arch, 4, 1);
  const auto window = random_window(128, 64, 3);
  for (auto _ : state) {
    const auto emb = nets::fe_forward(params, window);
    const auto out = nets::gen_forward(params, window, emb);
    benchmark::DoNotOptimize(nets::disc_forward(params, out, 64).probs.data());
  }
}
BENCHMARK(BM_Forward)->ArgName("default_arch")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
