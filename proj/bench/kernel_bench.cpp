// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS set to compare.

#include <random>

#include <benchmark/benchmark.h>

#include "contextgpt/extractor.hpp"
#include "contextgpt/kernels.hpp"

using namespace contextgpt;

namespace {

struct Rows {
  std::vector<float> query;
  std::vector<std::vector<float>> data;
  std::vector<std::span<const float>> views;
};

Rows make_rows(std::size_t n, std::size_t dim) {
  std::mt19937 rng(1);
  std::normal_distribution<float> d;
  Rows r;
  r.query.resize(dim);
  for (auto& x : r.query) x = d(rng);
  r.data.assign(n, std::vector<float>(dim));
  for (auto& row : r.data)
    for (auto& x : row) x = d(rng);
  r.views.assign(r.data.begin(), r.data.end());
  return r;
}

void BM_cosine_serial(benchmark::State& state) {
  auto r = make_rows(state.range(0), 384);
  std::vector<double> out(r.views.size());
  for (auto _ : state) {
    kernels::cosine_scores_serial(r.query, r.views, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_cosine_omp(benchmark::State& state) {
  auto r = make_rows(state.range(0), 384);
  std::vector<double> out(r.views.size());
  for (auto _ : state) {
    kernels::cosine_scores(r.query, r.views, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

std::vector<std::string> responses(std::size_t n) {
  const char* names[] = {"Walking", "Running", "Sitting", "Standing", "Cycling", "Lying"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string r = "Reasoning: the context rules out [Lying].\nConsistent activities: [";
    for (std::size_t j = 0; j <= i % 5; ++j) r += std::string(j ? ", " : "") + names[(i + j) % 6];
    out.push_back(r + "]");
  }
  return out;
}

const ActivitySet kActs({"Walking", "Running", "Sitting", "Standing", "Cycling", "Lying"});

void BM_extract_serial(benchmark::State& state) {
  auto rs = responses(state.range(0));
  for (auto _ : state) {
    std::vector<Extraction> out;
    out.reserve(rs.size());
    for (const auto& r : rs) out.push_back(extract(r, kActs));
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_extract_batch_omp(benchmark::State& state) {
  auto rs = responses(state.range(0));
  for (auto _ : state) {
    auto b = extract_batch(rs, kActs);
    benchmark::DoNotOptimize(b.results.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_cosine_serial)->Arg(64)->Arg(1024)->Arg(16384);
BENCHMARK(BM_cosine_omp)->Arg(64)->Arg(1024)->Arg(16384);
BENCHMARK(BM_extract_serial)->Arg(1000)->Arg(10000);
BENCHMARK(BM_extract_batch_omp)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
