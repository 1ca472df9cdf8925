// Serial reference vs OpenMP kernel timings. Range argument 0 is serial, 1 parallel.

#include <benchmark/benchmark.h>

#include <numeric>

#include "memtax/dupindex.hpp"
#include "memtax/feature_vector.hpp"
#include "memtax/features.hpp"
#include "memtax/matching.hpp"
#include "memtax/predictor.hpp"
#include "memtax/stats.hpp"
#include "memtax/synthgen.hpp"

using namespace memtax;

namespace {

Execution exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::serial : Execution::parallel;
}

const SynthCorpus& corpus() {
  static const SynthCorpus sc = [] {
    SynthSpec spec;
    spec.seed = 1;
    spec.documents = 2000;
    spec.plants = {{PlantKind::random, 8, 40}, {PlantKind::repeating, 1, 40}, {PlantKind::incrementing, 1, 40}};
    return generate_corpus(spec);
  }();
  return sc;
}

const std::vector<Sample>& samples() {
  static const auto s = extract_samples(corpus().corpus).samples;
  return s;
}

const std::vector<FeatureRecord>& records() {
  static const auto r = [] {
    RecordSpec spec;
    spec.n = 20000;
    spec.seed = 2;
    spec.coefficients = simpson_coefficients();
    return generate_records(spec);
  }();
  return r;
}

void BM_build_index(benchmark::State& state) {
  for (auto _ : state) {
    auto index = build_index(corpus().corpus, {}, exec_of(state));
    benchmark::DoNotOptimize(index.window_count());
  }
}

void BM_semantic_match_lists(benchmark::State& state) {
  const auto table = hashed_bag_embeddings(samples());
  for (auto _ : state) benchmark::DoNotOptimize(semantic_match_lists(table, kDefaultSemanticThreshold, exec_of(state)));
}

void BM_featurize(benchmark::State& state) {
  const auto index = build_index(corpus().corpus);
  const auto table = hashed_bag_embeddings(samples());
  for (auto _ : state)
    benchmark::DoNotOptimize(featurize(samples(), index, table, corpus().vocabulary, {}, exec_of(state)));
}

void BM_bootstrap_mean(benchmark::State& state) {
  std::vector<double> data(5000);
  Rng rng(3);
  for (auto& v : data) v = uniform01(rng);
  const auto mean = [](std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap(mean, data, 1000, 4, exec_of(state)));
}

void BM_dependency_report(benchmark::State& state) {
  DependencyConfig cfg;
  cfg.permutations = 1000;
  for (auto _ : state)
    benchmark::DoNotOptimize(dependency_report(records(), model_feature_names(), cfg, exec_of(state)));
}

void BM_partition_search(benchmark::State& state) {
  const auto& names = model_feature_names();
  const auto data = make_dataset(records(), names);
  std::vector<std::size_t> train(16000), val(4000);
  std::iota(train.begin(), train.end(), 0);
  std::iota(val.begin(), val.end(), 16000);
  const auto tr = subset(data, train), va = subset(data, val);
  PartitionSearchConfig cfg;
  cfg.candidates = {"duplicate_count", "huffman_bits", "continuation_perplexity"};
  for (auto _ : state) benchmark::DoNotOptimize(partition_search(tr, va, cfg, {}, exec_of(state)));
}

}  // namespace

BENCHMARK(BM_build_index)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_semantic_match_lists)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_featurize)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bootstrap_mean)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_dependency_report)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_partition_search)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->Iterations(1);

BENCHMARK_MAIN();
