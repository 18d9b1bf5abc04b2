#include <benchmark/benchmark.h>

#include <latentlens/latentlens.hpp>

using namespace latentlens;

namespace {

const MixtureModel& reference() {
  static const MixtureModel m = make_sphere_mixture(5, 8, 2.5, 42);
  return m;
}

void BM_Score(benchmark::State& state) {
  const auto m = marginal_mixture(reference(), NoiseSchedule::standard(), 0.5);
  Rng rng(1);
  const Vector x = standard_normal(rng, 8);
  for (auto _ : state) benchmark::DoNotOptimize(m.derivatives(x));
}
BENCHMARK(BM_Score);

void BM_Generate(benchmark::State& state) {
  const ProbabilityFlow flow(reference(), NoiseSchedule::standard(),
                             {Method::rk4, static_cast<int>(state.range(0))});
  Rng rng(2);
  const Vector z = standard_normal(rng, 8);
  for (auto _ : state) benchmark::DoNotOptimize(flow.generate(z));
}
BENCHMARK(BM_Generate)->Arg(64)->Arg(256)->Arg(512);

void BM_ForwardWithLogdet(benchmark::State& state) {
  const ProbabilityFlow flow(reference(), NoiseSchedule::standard());
  Rng rng(3);
  const Vector x = standard_normal(rng, 8);
  for (auto _ : state) benchmark::DoNotOptimize(flow.forward(x, PathDetail::endpoints).logdet);
}
BENCHMARK(BM_ForwardWithLogdet);

void BM_TrainMlpEpoch(benchmark::State& state) {
  Rng rng(4);
  TrainingSet data;
  const auto n = state.range(0);
  data.inputs.resize(n, 8);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.inputs.row(i) = standard_normal(rng, 8).transpose();
    data.labels.push_back(static_cast<int>(i % 5));
  }
  MlpHyper hyper;
  hyper.epochs = 1;
  for (auto _ : state) {
    Rng r(5);
    benchmark::DoNotOptimize(train_mlp(data, 5, Head::classifier, hyper, r).final_loss);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_TrainMlpEpoch)->Arg(1500)->Arg(15000);

void BM_TrainLda(benchmark::State& state) {
  Rng rng(6);
  const auto sample = reference().sample(rng, 2000);
  const LabeledPoints data{sample.points, sample.labels, 5};
  for (auto _ : state) benchmark::DoNotOptimize(train_lda(data).priors());
}
BENCHMARK(BM_TrainLda);

}  // namespace
BENCHMARK_MAIN();
