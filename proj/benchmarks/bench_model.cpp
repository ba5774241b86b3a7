#include <benchmark/benchmark.h>

#include "conglude/encoder.hpp"
#include "conglude/synth.hpp"

using namespace conglude;

namespace {

enc::EncoderConfig small_config() {
  enc::EncoderConfig c;
  c.residue_in = 64;
  c.ligand_in = 32;
  c.contrast_dim = 64;
  c.ligand_hidden = 128;
  return c;
}

void BM_EncodeProtein(benchmark::State& state) {
  prot::SynthConfig sc;
  sc.n_proteins = 1;
  sc.residues_per_protein = static_cast<std::size_t>(state.range(0));
  const auto ds = prot::synth_dataset(sc);
  enc::Model model(small_config(), 1);
  const auto g = model.make_graph(ds.proteins[0]);
  for (auto _ : state) {
    NoGradGuard guard;
    auto out = model.encode_protein(g);
    auto ps = model.project(model.cluster_pockets(out));
    benchmark::DoNotOptimize(ps);
  }
}
BENCHMARK(BM_EncodeProtein)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_EncodeLigands(benchmark::State& state) {
  enc::Model model(small_config(), 1);
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor x = Tensor::matrix(n, 32);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i % 7) * 0.1;
  for (auto _ : state) {
    NoGradGuard guard;
    auto m = model.encode_ligands(Var::constant(x));
    benchmark::DoNotOptimize(m);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_EncodeLigands)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace
