// Parallel kernels against their serial references. Run with
// --benchmark_filter=<kernel> and vary IMAP_THREADS to compare scaling.

#include <benchmark/benchmark.h>

#include <vector>

#include "imap/kernels.hpp"
#include "imap/parallel.hpp"
#include "imap/rng.hpp"

namespace {

std::vector<float> normals(std::size_t n, std::uint64_t seed) {
  imap::CounterRng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

constexpr std::size_t kDim = 64;

template <bool Parallel>
void BM_AttentionApply(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto q = normals(n * kDim, 1), k = normals(n * kDim, 2);
  std::vector<double> x(n, 1.0 / static_cast<double>(n)), y(n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      imap::kernels::attention_apply(q, k, n, kDim, 0.125, x, y);
    } else {
      imap::kernels::attention_apply_serial(q, k, n, kDim, 0.125, x, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

template <bool Parallel>
void BM_RowDot(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto rows = normals(n * kDim, 3), v = normals(kDim, 4);
  std::vector<double> out(n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      imap::kernels::row_dot(rows, kDim, v, out);
    } else {
      imap::kernels::row_dot_serial(rows, kDim, v, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_ClusterMoments(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto pts = normals(n * kDim, 5);
  std::vector<std::vector<std::uint32_t>> members(16);
  for (std::uint32_t i = 0; i < n; ++i) members[i * 16 / n].push_back(i);
  for (auto _ : state) {
    auto m = Parallel ? imap::kernels::cluster_moments(pts, kDim, members)
                      : imap::kernels::cluster_moments_serial(pts, kDim, members);
    benchmark::DoNotOptimize(m.within_ss.data());
  }
}

BENCHMARK(BM_AttentionApply<true>)->Arg(256)->Arg(1024)->Name("attention_apply/parallel");
BENCHMARK(BM_AttentionApply<false>)->Arg(256)->Arg(1024)->Name("attention_apply/serial");
BENCHMARK(BM_RowDot<true>)->Arg(1 << 14)->Name("row_dot/parallel");
BENCHMARK(BM_RowDot<false>)->Arg(1 << 14)->Name("row_dot/serial");
BENCHMARK(BM_ClusterMoments<true>)->Arg(1 << 13)->Name("cluster_moments/parallel");
BENCHMARK(BM_ClusterMoments<false>)->Arg(1 << 13)->Name("cluster_moments/serial");

}  // namespace

int main(int argc, char** argv) {
  imap::set_thread_count(0);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
