#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <string>

#include "conglude/screen.hpp"

using namespace conglude;

namespace {

screen::EmbeddingStore random_store(std::size_t rows, std::size_t width) {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> nd;
  screen::EmbeddingStore s;
  s.width = width;
  s.data.resize(rows * width);
  for (float& v : s.data) v = nd(rng);
  s.ids.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) s.ids[i] = "L" + std::to_string(i);
  return s;
}

void BM_RankByCosine(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto shards = static_cast<std::size_t>(state.range(1));
  const auto store = random_store(rows, 256);
  std::vector<double> q(256, 0.0);
  for (std::size_t k = 0; k < q.size(); ++k) q[k] = std::sin(static_cast<double>(k));
  for (auto _ : state) {
    auto r = screen::rank_by_cosine(store, q, 0, 100, shards, shards);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows));
}
BENCHMARK(BM_RankByCosine)->Args({100000, 1})->Args({100000, 4})->Unit(benchmark::kMillisecond);

void BM_FullRanking(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto store = random_store(rows, 256);
  std::vector<double> q(256, 1.0);
  for (auto _ : state) {
    auto r = screen::rank_by_cosine(store, q, 0, 0);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows));
}
BENCHMARK(BM_FullRanking)->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace
