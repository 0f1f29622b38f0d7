#include <benchmark/benchmark.h>

#include "understory/aperture.hpp"
#include "understory/receptive_field.hpp"
#include "understory/scene_sim.hpp"

namespace {

using namespace understory;

GroundTruthVolume desk_volume() {
  ForestSpec spec;
  spec.density = 220.0;
  spec.seed = 3;
  return voxelize(generate_forest(spec), Dims3{64, 64, 32}, 20.0);
}

const GroundTruthVolume& volume() {
  static const GroundTruthVolume v = desk_volume();
  return v;
}

const ApertureScan& scan() {
  static const ApertureScan s = render_scan(volume(), plan_grid(24.0, 6.0, 35.0, 15.0, 15.0), CameraIntrinsics{256, 50.0});
  return s;
}

void BM_RenderAerial(benchmark::State& state) {
  const auto size = static_cast<int>(state.range(0));
  const CameraPose pose = CameraPose::nadir_at(15.0, 15.0, 35.0);
  for (auto _ : state) benchmark::DoNotOptimize(render_aerial(volume(), pose, CameraIntrinsics{size, 50.0}));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_RenderAerial)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_FocalStack(benchmark::State& state) {
  const StackGeometry g = volume().stack_geometry();
  for (auto _ : state) benchmark::DoNotOptimize(build_focal_stack(scan(), g));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(g.dims.count()));
}
BENCHMARK(BM_FocalStack)->Unit(benchmark::kMillisecond);

void BM_SamplePatch(benchmark::State& state) {
  static const FocalStack stack = build_focal_stack(scan(), volume().stack_geometry());
  const PatchDims dims{2, 2, static_cast<int>(state.range(0))};
  const ApertureSquare ap{15.0, 15.0, 24.0, 35.0};
  std::vector<float> out(dims.count());
  int x = 0;
  for (auto _ : state) {
    const Frustum f = receptive_frustum(stack.geometry, x, 31 - x % 32, 4, ap);
    sample_patch_into(stack, f, dims, out);
    benchmark::DoNotOptimize(out.data());
    x = (x + 7) % 64;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SamplePatch)->Arg(8)->Arg(20);

}  // namespace
