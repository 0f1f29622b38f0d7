#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "understory/error.hpp"
#include "understory/receptive_field.hpp"

using namespace understory;
using namespace understory::testing;

namespace {

FocalStack filled_stack(Dims3 dims, double extent, std::vector<double> heights, float value) {
  FocalStack s;
  s.geometry.dims = dims;
  s.geometry.extent = extent;
  s.geometry.heights = std::move(heights);
  s.values.assign(dims.count(), value);
  s.valid.assign(dims.count(), 1);
  return s;
}

std::vector<double> pitch_heights(int d, double z_top) {
  std::vector<double> h(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) h[static_cast<std::size_t>(k)] = (k + 1) * z_top / d;
  return h;
}

// Mean of the piecewise-constant layer over `r`, by dense point sampling.
double sampled_mean(const FocalStack& s, int layer, const Rect& r, int n) {
  const double cw = s.geometry.cell_width(), ch = s.geometry.cell_height();
  double sum = 0.0;
  for (int v = 0; v < n; ++v) {
    for (int u = 0; u < n; ++u) {
      const double x = r.x0 + (u + 0.5) * r.width() / n;
      const double y = r.y0 + (v + 0.5) * r.height() / n;
      sum += s.at(static_cast<int>(x / cw), static_cast<int>(y / ch), layer);
    }
  }
  return sum / (static_cast<double>(n) * n);
}

}  // namespace

TEST(Frustum, HalfWidthAtMidHeight) {
  const StackGeometry g{Dims3{30, 30, 3}, 30.0, {0.0, 17.5, 30.0}};
  const ApertureSquare ap{15.0, 15.0, 24.0, 35.0};
  const Frustum f = receptive_frustum(Eigen::Vector3d(15.0, 15.0, 0.0), ap, g);
  ASSERT_EQ(f.layer_count(), 3);
  EXPECT_EQ(f.first_layer, 0);
  EXPECT_DOUBLE_EQ(f.sections[0].width(), 0.0);
  EXPECT_NEAR(f.sections[1].width(), 12.0, 1e-12);
  EXPECT_NEAR(f.sections[1].x0, 9.0, 1e-12);
  EXPECT_NEAR(f.sections[2].height(), 24.0 * 30.0 / 35.0, 1e-12);
}

TEST(Frustum, SectionsNestAndGrow) {
  const StackGeometry g{Dims3{16, 16, 16}, 30.0, pitch_heights(16, 20.0)};
  const ApertureSquare ap{15.0, 15.0, 24.0, 35.0};
  const Frustum f = receptive_frustum(g, 3, 12, 4, ap);
  EXPECT_EQ(f.first_layer, 4);
  EXPECT_EQ(f.layer_count(), 12);
  for (int i = 1; i < f.layer_count(); ++i) {
    EXPECT_GT(f.sections[i].area(), f.sections[i - 1].area());
    EXPECT_TRUE(f.sections[i].contains(f.sections[i - 1], 1e-12));
    EXPECT_TRUE(ap.rect().contains(f.sections[i], 1e-12));
  }
}

TEST(Frustum, RejectsBadApex) {
  const StackGeometry g{Dims3{4, 4, 2}, 10.0, {1.0, 2.0}};
  const ApertureSquare ap{5.0, 5.0, 6.0, 20.0};
  EXPECT_THROW(receptive_frustum(Eigen::Vector3d(5.0, 5.0, 3.0), ap, g), Error);
  EXPECT_THROW(receptive_frustum(Eigen::Vector3d(-1.0, 5.0, 1.0), ap, g), Error);
  EXPECT_THROW(receptive_frustum(g, 4, 0, 0, ap), Error);
}

TEST(AxialLayers, SpreadAndTies) {
  EXPECT_EQ(axial_layers(0, 32, 8), (std::vector<int>{0, 4, 9, 13, 18, 22, 27, 31}));
  EXPECT_EQ(axial_layers(0, 2, 3), (std::vector<int>{0, 0, 1}));
  EXPECT_EQ(axial_layers(5, 6, 4), (std::vector<int>{5, 5, 5, 5}));
  EXPECT_EQ(axial_layers(3, 10, 1), (std::vector<int>{3}));
  EXPECT_THROW(axial_layers(10, 10, 4), Error);
  for (int apex = 0; apex < 20; ++apex) {
    const auto l = axial_layers(apex, 20, 7);
    EXPECT_EQ(l.front(), apex);
    EXPECT_EQ(l.back(), 19);
    for (std::size_t i = 1; i < l.size(); ++i) EXPECT_GE(l[i], l[i - 1]);
  }
}

TEST(SamplePatch, ConstantStackGivesConstantPatch) {
  const FocalStack s = filled_stack(Dims3{20, 20, 10}, 30.0, pitch_heights(10, 20.0), 0.42f);
  const ApertureSquare ap{15.0, 15.0, 24.0, 35.0};
  for (int layer : {0, 5, 9}) {
    const auto patch = sample_patch(s, receptive_frustum(s.geometry, 1, 18, layer, ap), PatchDims{3, 2, 5});
    ASSERT_EQ(patch.size(), 30u);
    for (float v : patch) EXPECT_FLOAT_EQ(v, 0.42f);
  }
}

TEST(SamplePatch, SubcellMeansAverageToSectionMean) {
  FocalStack s = filled_stack(Dims3{30, 30, 8}, 30.0, pitch_heights(8, 20.0), 0.0f);
  Rng rng(9);
  for (float& v : s.values) v = static_cast<float>(rng.uniform());
  const ApertureSquare ap{15.0, 15.0, 24.0, 35.0};
  const Frustum f = receptive_frustum(s.geometry, 15, 14, 0, ap);
  const PatchDims pd{2, 2, 8};
  const auto patch = sample_patch(s, f, pd);
  const auto layers = axial_layers(0, 8, 8);
  for (int d = 1; d < pd.d; ++d) {
    const Rect& r = f.sections[static_cast<std::size_t>(layers[d])];
    ASSERT_TRUE(Rect({0.0, 0.0, 30.0, 30.0}).contains(r));
    double mean = 0.0;
    for (int k = 0; k < 4; ++k) mean += patch[static_cast<std::size_t>(d) * 4 + k];
    mean /= 4.0;
    EXPECT_NEAR(mean, sampled_mean(s, layers[d], r, 600), 3e-3) << "slice " << d;
  }
  // Apex slice collapses onto the apex cell.
  for (int k = 0; k < 4; ++k) EXPECT_FLOAT_EQ(patch[static_cast<std::size_t>(k)], s.at(15, 14, 0));
}

TEST(SamplePatch, InvalidCellsAreSkipped) {
  FocalStack s = filled_stack(Dims3{10, 10, 2}, 10.0, {1.0, 5.0}, 0.8f);
  for (int x = 0; x < 5; ++x) {
    for (int y = 0; y < 10; ++y) {
      s.values[s.geometry.dims.index(x, y, 1)] = 0.0f;
      s.valid[s.geometry.dims.index(x, y, 1)] = 0;
    }
  }
  const ApertureSquare ap{5.0, 5.0, 10.0, 20.0};
  const auto patch = sample_patch(s, receptive_frustum(s.geometry, 5, 5, 0, ap), PatchDims{2, 2, 2});
  for (float v : patch) EXPECT_FLOAT_EQ(v, 0.8f);
}

namespace {

struct ToyPlot {
  FocalStack stack;
  GroundTruthVolume truth;
};

ToyPlot toy_plot(std::uint64_t seed) {
  ToyPlot p;
  p.truth = ground_only(Dims3{12, 12, 6}, 12.0, 12.0, 0.5f);
  Rng rng(seed);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 12; ++x) {
      if (rng.uniform() < 0.3) set_voxel(p.truth, x, y, 2, static_cast<float>(rng.uniform()));
    }
  }
  p.stack = filled_stack(p.truth.dims, 12.0, p.truth.stack_geometry().heights, 0.3f);
  return p;
}

}  // namespace

TEST(BuildDataset, CountsVoidsAndSplits) {
  const ToyPlot a = toy_plot(1), b = toy_plot(2);
  const ApertureSquare ap{6.0, 6.0, 8.0, 30.0};
  const std::vector<PlotData> plots{{&a.stack, &a.truth, ap}, {&b.stack, &b.truth, ap}};
  DatasetOptions opt;
  opt.dims = PatchDims{2, 2, 4};
  opt.split_seed = 5;

  const std::size_t occupied = [&] {
    std::size_t n = 0;
    for (const ToyPlot* p : {&a, &b}) {
      for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 12; ++x) n += p->truth.is_occupied(x, y, 2);
      }
    }
    return n;
  }();

  const PatchDataset solid = build_dataset(plots, 2, opt);
  EXPECT_EQ(solid.size(), occupied);
  EXPECT_EQ(solid.void_count(), 0u);
  EXPECT_EQ(solid.inputs.size(), occupied * 16);

  opt.include_void = true;
  const PatchDataset all = build_dataset(plots, 2, opt);
  EXPECT_EQ(all.size(), 288u);
  EXPECT_EQ(all.void_count(), 288u - occupied);
  // Per plot: round(0.15 * 144) = 22 val and 22 test cells.
  EXPECT_EQ(all.count(Split::Val), 44u);
  EXPECT_EQ(all.count(Split::Test), 44u);

  std::size_t j = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all.is_void[i]) {
      EXPECT_TRUE(std::isnan(all.targets[i]));
      continue;
    }
    ASSERT_LT(j, solid.size());
    EXPECT_EQ(all.plot[i], solid.plot[j]);
    EXPECT_EQ(all.x[i], solid.x[j]);
    EXPECT_EQ(all.y[i], solid.y[j]);
    EXPECT_EQ(all.split[i], solid.split[j]);
    EXPECT_EQ(all.targets[i], solid.targets[j]);
    ++j;
  }
  EXPECT_EQ(j, solid.size());
}

TEST(BuildDataset, DeterministicAndWorkerInvariant) {
  const ToyPlot a = toy_plot(3);
  const std::vector<PlotData> plots{{&a.stack, &a.truth, ApertureSquare{6.0, 6.0, 8.0, 30.0}}};
  DatasetOptions opt;
  opt.dims = PatchDims{2, 2, 3};
  opt.include_void = true;
  const PatchDataset x = build_dataset(plots, 1, opt);
  opt.workers = 3;
  const PatchDataset y = build_dataset(plots, 1, opt);
  EXPECT_EQ(x.inputs, y.inputs);
  EXPECT_EQ(x.split, y.split);
  opt.split_seed = 99;
  const PatchDataset z = build_dataset(plots, 1, opt);
  EXPECT_NE(x.split, z.split);
}

TEST(BuildDataset, RejectsMismatchedTruth) {
  const ToyPlot a = toy_plot(3);
  GroundTruthVolume other = ground_only(Dims3{6, 6, 6}, 12.0, 12.0, 0.5f);
  const std::vector<PlotData> plots{{&a.stack, &other, ApertureSquare{6.0, 6.0, 8.0, 30.0}}};
  EXPECT_THROW(build_dataset(plots, 0, DatasetOptions{}), Error);
}
