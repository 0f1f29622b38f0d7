#include <benchmark/benchmark.h>

#include "understory/corrector_net.hpp"
#include "understory/rng.hpp"

namespace {

using namespace understory;

NetConfig desk_net() {
  NetConfig c;
  c.input = PatchDims{2, 2, 8};
  c.channels = NetConfig::desk_channels();
  return c;
}

std::vector<float> random_inputs(std::size_t n) {
  Rng rng(9);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform());
  return v;
}

void BM_Forward(benchmark::State& state) {
  const NetConfig c = desk_net();
  const auto m = LayerModel<float>::initialized(c, 1);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto in = random_inputs(batch * c.input.count());
  for (auto _ : state) benchmark::DoNotOptimize(forward<float>(m, in));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(64)->Arg(256);

void BM_Backward(benchmark::State& state) {
  const NetConfig c = desk_net();
  const auto m = LayerModel<float>::initialized(c, 1);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto in = random_inputs(batch * c.input.count());
  const std::vector<float> t(batch, 0.4f);
  for (auto _ : state) benchmark::DoNotOptimize(backward<float>(m, in, t));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_Backward)->Arg(64)->Arg(256);

}  // namespace
