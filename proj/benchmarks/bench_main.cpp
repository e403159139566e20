#include <benchmark/benchmark.h>

#include <numeric>

#include "bnrhn/cells.hpp"
#include "bnrhn/dataset.hpp"
#include "bnrhn/model.hpp"
#include "bnrhn/rng.hpp"

using namespace bnrhn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(8, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(8 * n * n));
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(128)->Arg(512);

void BM_rhn_step(benchmark::State& state) {
  const auto kind = static_cast<CellKind>(state.range(0));
  CellSpec spec;
  spec.kind = kind;
  spec.input_width = 64;
  spec.hidden_width = 64;
  spec.depth = 3;
  InitOptions init;
  const auto p = std::get<RhnParams>(init_params(spec, init));
  const Matrix s = random_matrix(8, 64, 3), x = random_matrix(8, 64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(rhn_time_step(s, x, p, Mode::train));
  state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_rhn_step)->Arg(static_cast<int>(CellKind::rhn))->Arg(static_cast<int>(CellKind::bn_rhn));

// One training unroll (forward + BPTT) on a batch of 8 synthetic captions.
void BM_unroll(benchmark::State& state) {
  DatasetSpec ds;
  ds.n_samples = 8;
  const auto data = synth_dataset(ds);
  const Vocab vocab = build_vocab(data, 1);
  ModelSpec spec;
  spec.kind = static_cast<CellKind>(state.range(0));
  spec.vocab_size = vocab.size();
  spec.feature_width = ds.feature_width;
  const ModelParams p = init_model(spec, InitOptions{});
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Batch b = make_batch(data, idx, vocab, 16);
  for (auto _ : state) {
    const auto fwd = forward_unroll(b, p, Mode::train);
    benchmark::DoNotOptimize(backward_unroll(fwd.cache, p));
  }
  state.SetLabel(std::string(to_string(spec.kind)));
}
BENCHMARK(BM_unroll)
    ->Arg(static_cast<int>(CellKind::lstm))
    ->Arg(static_cast<int>(CellKind::rhn))
    ->Arg(static_cast<int>(CellKind::bn_rhn));

}  // namespace

BENCHMARK_MAIN();
