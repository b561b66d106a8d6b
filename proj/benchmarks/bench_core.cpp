#include <benchmark/benchmark.h>

#include <random>

#include "cellloc/classify.hpp"
#include "cellloc/eval.hpp"
#include "cellloc/features.hpp"
#include "cellloc/postprocess.hpp"
#include "cellloc/synth.hpp"

using namespace cellloc;

namespace {

MeasurementSet synthetic(std::uint64_t seed) {
  const auto sc = Scenario::defaults();
  auto ch = sc.channel;
  ch.seed = seed;
  return generate(sc.geometry, ch, sc.trajectory, "b" + std::to_string(seed));
}

std::vector<Label> labels_of(const MeasurementSet& s) {
  std::vector<Label> y;
  for (const auto& f : s.frames()) y.push_back(*f.label);
  return y;
}

void BM_KnnPredictSet(benchmark::State& state) {
  const std::size_t L = static_cast<std::size_t>(state.range(0));
  const auto training_rows = [&](std::uint64_t seed) {
    const auto s = synthetic(seed);
    return TrainingSet::from_features(pipeline_features(s, L), labels_of(s));
  };
  auto train = training_rows(1);
  train.append(training_rows(2));
  train.append(training_rows(3));
  const auto knn = KnnClassifier::fit(train, {});
  const auto query = pipeline_features(synthetic(4), L);
  for (auto _ : state) benchmark::DoNotOptimize(knn.predict_all(query));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(query.size()));
}
BENCHMARK(BM_KnnPredictSet)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_MomentFeatures(benchmark::State& state) {
  const auto s = synthetic(7);
  const auto L = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(moment_features(s, {L}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.size()));
}
BENCHMARK(BM_MomentFeatures)->Arg(2)->Arg(10)->Arg(50);

void BM_HmmFilter(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::vector<Label> truth(static_cast<std::size_t>(state.range(0)));
  std::vector<Label> pred(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth[i] = static_cast<Label>((i / 100) % 3);
    pred[i] = rng() % 10 == 0 ? static_cast<Label>(rng() % 3) : truth[i];
  }
  const auto hmm = fit_hmm(truth, pred, {});
  for (auto _ : state) benchmark::DoNotOptimize(hmm_filter(pred, hmm));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HmmFilter)->Arg(551)->Arg(100000);

void BM_MedianFilter(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::vector<Label> y(100000);
  for (auto& v : y) v = static_cast<Label>(rng() % 3);
  const auto m = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(median_filter(y, m));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(y.size()));
}
BENCHMARK(BM_MedianFilter)->Arg(1)->Arg(10)->Arg(100);

void BM_RunPipeline(benchmark::State& state) {
  std::vector<MeasurementSet> sets;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) sets.push_back(synthetic(seed));
  const SplitPlan split{{"b1", "b2", "b3"}, "b4"};
  PipelineConfig cfg;
  cfg.moment_L = 2;
  cfg.filter = FilterSpec::hmm();
  for (auto _ : state) benchmark::DoNotOptimize(run_pipeline(sets, split, cfg));
}
BENCHMARK(BM_RunPipeline)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
