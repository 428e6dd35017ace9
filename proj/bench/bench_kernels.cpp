// Blocked OpenMP batch kernels against the serial reference.

#include <random>

#include <benchmark/benchmark.h>

#include "causalkan/kernels.hpp"
#include "causalkan/reference.hpp"

namespace {

using namespace causalkan;

KanNetwork bench_net() {
  NetworkSpec spec;
  spec.widths = {10, 8, 1};
  spec.input_domains.assign(10, {-3.0, 3.0});
  spec.input_standardization.assign(10, {});
  return make_network(spec, 7);
}

Matrix bench_input(std::size_t rows) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  Matrix x(rows, 10);
  for (auto& v : x.data()) v = z(rng);
  return x;
}

void BM_forward_parallel(benchmark::State& st) {
  const auto net = bench_net();
  const auto x = bench_input(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(forward_batch(net, x));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_forward_reference(benchmark::State& st) {
  const auto net = bench_net();
  const auto x = bench_input(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(reference::forward_batch(net, x));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_backward_parallel(benchmark::State& st) {
  const auto net = bench_net();
  const auto x = bench_input(static_cast<std::size_t>(st.range(0)));
  const auto fwd = forward_batch(net, x);
  const Matrix g(x.rows(), 1, 1.0);
  for (auto _ : st) benchmark::DoNotOptimize(backward_batch(net, fwd, g, {}, false));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_backward_reference(benchmark::State& st) {
  const auto net = bench_net();
  const auto x = bench_input(static_cast<std::size_t>(st.range(0)));
  const auto fwd = reference::forward_batch(net, x);
  const Matrix g(x.rows(), 1, 1.0);
  for (auto _ : st) benchmark::DoNotOptimize(reference::backward_batch(net, fwd, g, {}, false));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

}  // namespace

BENCHMARK(BM_forward_parallel)->Arg(256)->Arg(4096);
BENCHMARK(BM_forward_reference)->Arg(256)->Arg(4096);
BENCHMARK(BM_backward_parallel)->Arg(256)->Arg(4096);
BENCHMARK(BM_backward_reference)->Arg(256)->Arg(4096);

BENCHMARK_MAIN();
