// Serial reference kernels against their OpenMP counterparts, plus batch
// linking. Run with OMP_NUM_THREADS to pick the parallel width.

#include <benchmark/benchmark.h>

#include <random>
#include <span>
#include <vector>

#include "relink/ed_model.hpp"
#include "relink/kernels.hpp"
#include "relink/pipeline.hpp"
#include "relink/synthetic.hpp"

using namespace relink;

namespace {

struct Rows {
  std::vector<float> data;
  std::vector<std::span<const float>> rows;
};

Rows make_rows(std::size_t n, std::size_t d) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> normal;
  Rows r;
  r.data.resize(n * d);
  for (auto& x : r.data) x = normal(rng);
  for (std::size_t i = 0; i < n; ++i) r.rows.emplace_back(r.data.data() + i * d, d);
  return r;
}

std::vector<double> make_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

template <auto Kernel>
void BM_AccumulateRows(benchmark::State& state) {
  Rows r = make_rows(static_cast<std::size_t>(state.range(0)), 300);
  std::vector<double> out(300);
  for (auto _ : state) {
    std::fill(out.begin(), out.end(), 0.0);
    Kernel(r.rows, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Kernel>
void BM_DotRows(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rows r = make_rows(n, 300);
  auto v = make_vec(300, 2);
  std::vector<double> out(n);
  for (auto _ : state) {
    Kernel(r.rows, v, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Kernel>
void BM_BilinearDiag(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 300;
  auto a = make_vec(n * d, 3);
  auto b = make_vec(n * d, 4);
  auto w = make_vec(d, 5);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    Kernel(a, n, b, n, w, 1.0, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

struct Workload {
  EfficiencyFixture fixture;
  KnowledgeStore store;
  EDModel model;

  Workload() : fixture(make_efficiency_fixture(8)), store(KnowledgeStore::from_bytes(fixture.store_bytes)) {
    model.hyper.dim = store.dim();
    model.params = EDParams::initialize(model.hyper, 8);
  }
};

const Workload& workload() {
  static const Workload w;
  return w;
}

void BM_LinkBatchSerial(benchmark::State& state) {
  const Workload& w = workload();
  Linker linker(w.store, w.model);
  for (auto _ : state) benchmark::DoNotOptimize(linker.link_batch_serial(w.fixture.documents));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.fixture.documents.size()));
}

void BM_LinkBatchParallel(benchmark::State& state) {
  const Workload& w = workload();
  Linker linker(w.store, w.model);
  for (auto _ : state) benchmark::DoNotOptimize(linker.link_batch(w.fixture.documents));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.fixture.documents.size()));
}

}  // namespace

BENCHMARK(BM_AccumulateRows<kernels::serial::accumulate_rows>)->Name("accumulate_rows/serial")->Arg(64)->Arg(4096);
BENCHMARK(BM_AccumulateRows<kernels::parallel::accumulate_rows>)->Name("accumulate_rows/parallel")->Arg(64)->Arg(4096);
BENCHMARK(BM_DotRows<kernels::serial::dot_rows>)->Name("dot_rows/serial")->Arg(64)->Arg(4096);
BENCHMARK(BM_DotRows<kernels::parallel::dot_rows>)->Name("dot_rows/parallel")->Arg(64)->Arg(4096);
BENCHMARK(BM_BilinearDiag<kernels::serial::bilinear_diag>)->Name("bilinear_diag/serial")->Arg(8)->Arg(64);
BENCHMARK(BM_BilinearDiag<kernels::parallel::bilinear_diag>)->Name("bilinear_diag/parallel")->Arg(8)->Arg(64);
BENCHMARK(BM_LinkBatchSerial)->Name("link_batch/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LinkBatchParallel)->Name("link_batch/parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
