#include <benchmark/benchmark.h>

#include <vector>

#include "suparc/data.hpp"
#include "suparc/evaluation.hpp"
#include "suparc/losses.hpp"
#include "suparc/model.hpp"
#include "suparc/rng.hpp"
#include "suparc/tensor.hpp"
#include "suparc/training.hpp"

namespace {

using namespace suparc;

SyntheticData bench_data(std::size_t n) {
  SyntheticConfig config;
  config.n_samples = n;
  config.seed = 1;
  return generate_synthetic(config);
}

EncoderConfig bench_encoder() {
  EncoderConfig encoder;  // stock widths: 35/74 inputs, hidden and rep 32
  return encoder;
}

void BM_CosineSimilarity(benchmark::State& state) {
  Rng rng(2);
  std::vector<double> a(32), b(32);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  Tensor ta = Tensor::vector(a);
  Tensor tb = Tensor::vector(b);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cosine_similarity(ta, tb).item());
  }
}
BENCHMARK(BM_CosineSimilarity);

void BM_SupArcLoss(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::vector<Tensor> h;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(32);
    for (auto& v : row) v = rng.normal();
    h.push_back(Tensor::vector(std::move(row)));
    y[i] = rng.uniform(-3.0, 3.0);
  }
  y[1] = y[0];
  const PairMatrix pairs = pair_label(y, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(suparc_loss(h, y, pairs, 0.1, 0.15).item());
  }
}
BENCHMARK(BM_SupArcLoss)->Arg(8)->Arg(32);

void BM_ForwardSample(benchmark::State& state) {
  const SyntheticData data = bench_data(40);
  const FusionModel model = init_params(bench_encoder(), 4);
  const Utterance& utterance = data.train.samples[0];
  for (auto _ : state) {
    const Representations reps = encode_utterance(model, utterance);
    benchmark::DoNotOptimize(
        predict(model, fuse(model, reps.text, reps.visual, reps.audio)).item());
  }
}
BENCHMARK(BM_ForwardSample);

void BM_TrainStep(benchmark::State& state) {
  const SyntheticData data = bench_data(80);
  FusionModel model = init_params(bench_encoder(), 5);
  TrainConfig config;
  config.batch_size = static_cast<std::size_t>(state.range(0));
  OptimizerState optimizer = init_optimizer(model);
  const auto batches = make_batches(data.train, config.batch_size, 1, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        train_step(model, data.train, batches[0], config, optimizer).total);
  }
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_PcaProject(benchmark::State& state) {
  Rng rng(6);
  const std::size_t n = 500, d = 32;
  std::vector<double> data(n * d);
  for (auto& v : data) v = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(pca_project(data, n, d, 2).explained_variance[0]);
  }
}
BENCHMARK(BM_PcaProject)->Unit(benchmark::kMillisecond);

void BM_GeometryScore(benchmark::State& state) {
  Rng rng(7);
  const std::size_t n = 400, d = 32;
  std::vector<double> vectors(n * d);
  for (auto& v : vectors) v = rng.normal();
  std::vector<double> y(n);
  for (auto& v : y) v = rng.uniform(-3.0, 3.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geometry_score(vectors, n, d, y).value);
  }
}
BENCHMARK(BM_GeometryScore)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
