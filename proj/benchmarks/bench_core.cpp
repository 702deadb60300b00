#include <random>

#include <benchmark/benchmark.h>

#include "metaalign/eval_harness.hpp"
#include "metaalign/maml.hpp"
#include "metaalign/synth_gen.hpp"

namespace {

using namespace metaalign;

struct Fixture {
  EmbeddingDataset dataset;
  TrainConfig config;
  ModelParams params;
  EpisodeData episode;

  explicit Fixture(std::size_t dim) {
    SynthConfig s;
    s.visual_dim = s.text_dim = dim;
    dataset = Generate(s);
    params = InitModel(dim, dim, config);
    auto rng = EpisodeRng(0, 0);
    episode = EpisodeData::From(SampleEpisode(dataset, Split::kBase, config.shape(), rng));
  }
};

void BM_SimilarityMatrix(benchmark::State& state) {
  const auto d = state.range(0);
  std::mt19937_64 rng(1);
  const auto p = InitMetric(MetricKind::kBilinear, d, 0, MetricInit::kGaussian, rng);
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Random(80, d);
  const Eigen::MatrixXd T = Eigen::MatrixXd::Random(5, d);
  for (auto _ : state) benchmark::DoNotOptimize(SimilarityMatrix<double>(p, Z, T));
}
BENCHMARK(BM_SimilarityMatrix)->Arg(16)->Arg(64)->Arg(256);

void BM_InnerAdapt(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(InnerAdapt(f.params, f.episode, f.config));
}
BENCHMARK(BM_InnerAdapt)->Arg(16)->Arg(64);

void BM_OuterGradient(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  f.config.grad_order = state.range(1) == 2 ? GradOrder::kSecond : GradOrder::kFirst;
  for (auto _ : state) benchmark::DoNotOptimize(OuterGradient(f.params, f.episode, f.config));
}
BENCHMARK(BM_OuterGradient)->Args({16, 1})->Args({16, 2})->Args({64, 1})->Args({64, 2});

void BM_Evaluate(benchmark::State& state) {
  Fixture f(16);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Evaluate(f.params, f.dataset, Split::kNovel, f.config, 20, 1));
  }
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
