#include <benchmark/benchmark.h>

#include <random>

#include "sfl/cost_model.hpp"
#include "sfl/fedavg.hpp"
#include "sfl/loss.hpp"
#include "sfl/model_spec.hpp"
#include "sfl/quantizer.hpp"
#include "sfl/sgd.hpp"

using namespace sfl;

namespace {

Tensor noise(const Shape& shape, std::uint64_t seed) {
  Tensor t(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

void BM_Conv3x3Forward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  LayerStack<float> s{Layer<float>::conv3x3(c, c)};
  init_uniform(s, 1);
  const Tensor x = noise({8, c, 16, 16}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(predict(s, x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(forward_macs(s, Shape{c, 16, 16}) * 8));
}
BENCHMARK(BM_Conv3x3Forward)->Arg(8)->Arg(32);

void BM_TrainStepTinyVgg(benchmark::State& state) {
  const auto spec = builtin_spec("tinyvgg");
  auto model = build_model<float>(spec, 3);
  const Tensor x = noise({20, 3, 16, 16}, 4);
  const std::vector<Label> y(20, 1);
  for (auto _ : state) {
    const auto trace = forward(model, x);
    const auto loss = softmax_cross_entropy(trace.output(), y);
    sgd_step(model, backward(model, trace, loss.grad), 0.0);
  }
}
BENCHMARK(BM_TrainStepTinyVgg);

void BM_Quantize(benchmark::State& state) {
  const Tensor a = noise({100, 128, 8, 8}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(quantize(a));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(a.size() * sizeof(float)));
}
BENCHMARK(BM_Quantize);

void BM_QactRoundTrip(benchmark::State& state) {
  auto z = quantize(noise({100, 128, 8, 8}, 6));
  z.labels.assign(100, 0);
  for (auto _ : state) benchmark::DoNotOptimize(deserialize_qact(serialize(z)));
}
BENCHMARK(BM_QactRoundTrip);

void BM_CostReportVgg11(benchmark::State& state) {
  const auto s = reference_setting("vgg11");
  for (auto _ : state) benchmark::DoNotOptimize(cost_report(s));
}
BENCHMARK(BM_CostReportVgg11)->Unit(benchmark::kMillisecond);

void BM_FedAvg(benchmark::State& state) {
  const auto spec = builtin_spec("tinyres");
  std::vector<LayerStack<float>> models;
  for (int k = 0; k < state.range(0); ++k) models.push_back(build_model<float>(spec, static_cast<std::uint64_t>(k)));
  const std::vector<std::size_t> counts(models.size(), 100);
  for (auto _ : state) benchmark::DoNotOptimize(fedavg<float>(models, counts));
}
BENCHMARK(BM_FedAvg)->Arg(4)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
