#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "understory/aperture.hpp"
#include "understory/error.hpp"

using namespace understory;
using namespace understory::testing;

TEST(PlanGrid, Counts) {
  EXPECT_EQ(plan_grid(24.0, 3.0, 35.0, 15.0, 15.0).size(), 81u);
  EXPECT_EQ(plan_grid(3.0, 3.0, 35.0, 15.0, 15.0).size(), 4u);
  EXPECT_EQ(plan_grid(24.0, 6.0, 35.0, 15.0, 15.0).size(), 25u);
  EXPECT_THROW(plan_grid(24.0, 0.0, 35.0, 15.0, 15.0), Error);
  EXPECT_THROW(plan_grid(-1.0, 3.0, 35.0, 15.0, 15.0), Error);
}

TEST(PlanGrid, CentredNadirAndPlanar) {
  const auto poses = plan_grid(24.0, 3.0, 35.0, 15.0, 15.0);
  double sx = 0.0, sy = 0.0;
  for (const auto& p : poses) {
    sx += p.position.x();
    sy += p.position.y();
    EXPECT_DOUBLE_EQ(p.position.z(), 35.0);
    EXPECT_GE(p.position.x(), 3.0 - 1e-12);
    EXPECT_LE(p.position.x(), 27.0 + 1e-12);
    EXPECT_TRUE(p.orientation.isApprox(CameraPose::nadir()));
  }
  EXPECT_NEAR(sx / poses.size(), 15.0, 1e-12);
  EXPECT_NEAR(sy / poses.size(), 15.0, 1e-12);
}

TEST(DefocusWeight, ClosedForm) {
  EXPECT_DOUBLE_EQ(defocus_weight(24.0, 10.0, 10.0), 1.0);
  EXPECT_NEAR(defocus_weight(24.0, 12.0, 15.0), 1.0 / 37.0, 1e-15);
  EXPECT_THROW(defocus_weight(24.0, 0.0, 3.0), Error);
  double prev = 1.0;
  for (double dz = 0.5; dz < 10.0; dz += 0.5) {
    const double w = defocus_weight(24.0, 12.0, 12.0 + dz);
    EXPECT_LT(w, prev);
    EXPECT_GT(w, 0.0);
    EXPECT_DOUBLE_EQ(w, defocus_weight(24.0, 12.0, 12.0 - dz));
    prev = w;
  }
}

TEST(Visibility, OneMinusDensitySquared) {
  EXPECT_DOUBLE_EQ(expected_visibility(0.0), 1.0);
  EXPECT_DOUBLE_EQ(expected_visibility(1.0), 0.0);
  EXPECT_DOUBLE_EQ(expected_visibility(0.5), 0.75);
  EXPECT_THROW(expected_visibility(1.5), Error);
}

TEST(FrustumSection, LinearInterpolation) {
  const ApertureSquare sq{15.0, 15.0, 24.0, 35.0};
  const Rect at_apex = sq.frustum_section(15.0, 15.0, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(at_apex.width(), 0.0);
  const Rect mid = sq.frustum_section(15.0, 15.0, 0.0, 17.5);
  EXPECT_NEAR(mid.x0, 9.0, 1e-12);
  EXPECT_NEAR(mid.x1, 21.0, 1e-12);
  const Rect top = sq.frustum_section(15.0, 15.0, 0.0, 35.0);
  EXPECT_NEAR(top.x0, 3.0, 1e-12);
  EXPECT_NEAR(top.y1, 27.0, 1e-12);
}

TEST(Register, CentralRaySamplesPrincipalPoint) {
  Image img(64, 64, 0.0f);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) img.at(r, c) = static_cast<float>(r * 64 + c) / 4096.0f;
  }
  // 5x5 cells over 10 m: the centre cell's centre is (5, 5); a camera there
  // sees it at pixel (31.5, 31.5), the mean of the four central pixels.
  const FocalGrid grid{5, 5, 10.0};
  const auto reg = project_to_focal_plane(img, CameraPose::nadir_at(5.0, 5.0, 20.0), CameraIntrinsics{64, 50.0}, 3.0, grid);
  const float expect = 0.25f * (img.at(31, 31) + img.at(31, 32) + img.at(32, 31) + img.at(32, 32));
  EXPECT_NEAR(reg.values[2 * 5 + 2], expect, 1e-6);
  EXPECT_TRUE(reg.hit[2 * 5 + 2]);
}

TEST(Register, UniformImageGivesUniformHits) {
  const Image img(32, 32, 0.37f);
  const FocalGrid grid{40, 40, 40.0};
  const auto reg = project_to_focal_plane(img, CameraPose::nadir_at(20.0, 20.0, 20.0), CameraIntrinsics{32, 50.0}, 0.0, grid);
  int hits = 0, misses = 0;
  for (std::size_t i = 0; i < reg.values.size(); ++i) {
    if (reg.hit[i]) {
      EXPECT_FLOAT_EQ(reg.values[i], 0.37f);
      ++hits;
    } else {
      ++misses;
    }
  }
  EXPECT_GT(hits, 0);
  EXPECT_GT(misses, 0);  // footprint ~18.7 m inside a 40 m grid
}

TEST(Register, RejectsPlaneAboveCamera) {
  const Image img(32, 32, 0.5f);
  EXPECT_THROW(project_to_focal_plane(img, CameraPose::nadir_at(0, 0, 10), CameraIntrinsics{32, 50.0}, 10.0,
                                      FocalGrid{4, 4, 4.0}),
               Error);
}

TEST(Register, ShiftMatchesPinholeDisparity) {
  // Two poses dx apart see a point at depth h - z shifted by f_px * dx / (h - z).
  const CameraIntrinsics cam{128, 50.0};
  const double dx = 2.0, h = 30.0;
  const auto p0 = CameraPose::nadir_at(16.0, 16.0, h);
  const auto p1 = CameraPose::nadir_at(16.0 + dx, 16.0, h);
  const Eigen::Vector3d world(13.3, 17.9, 1.0);
  const auto a = project(p0, cam, world);
  const auto b = project(p1, cam, world);
  EXPECT_NEAR(a->col - b->col, cam.focal_px() * dx / (h - world.z()), 1e-9);
  EXPECT_NEAR(a->row, b->row, 1e-12);
}

TEST(Integrate, MeanOverHits) {
  RegisteredImage a{1, 2, {0.2f, 0.9f}, {1, 1}};
  RegisteredImage b{1, 2, {0.6f, 0.1f}, {1, 0}};
  RegisteredImage c{1, 2, {0.0f, 0.0f}, {0, 0}};
  const std::vector<RegisteredImage> regs{a, b, c};
  const IntegralImage ii = integrate(regs);
  EXPECT_NEAR(ii.values[0], 0.4f, 1e-7);
  EXPECT_FLOAT_EQ(ii.values[1], 0.9f);
  EXPECT_EQ(ii.hits[0], 2u);
  const std::vector<RegisteredImage> only_c{c};
  EXPECT_FALSE(integrate(only_c).valid[0]);
  EXPECT_THROW(integrate(std::vector<RegisteredImage>{}), Error);
}

TEST(Integrate, WithinSampleRangeAndOrderRobust) {
  Rng rng(3);
  std::vector<RegisteredImage> regs;
  for (int k = 0; k < 9; ++k) {
    RegisteredImage r{4, 4, std::vector<float>(16), std::vector<std::uint8_t>(16)};
    for (int i = 0; i < 16; ++i) {
      r.values[i] = static_cast<float>(rng.uniform());
      r.hit[i] = rng.uniform() < 0.8 ? 1 : 0;
    }
    regs.push_back(r);
  }
  const IntegralImage fwd = integrate(regs);
  std::vector<RegisteredImage> rev(regs.rbegin(), regs.rend());
  const IntegralImage back = integrate(rev);
  for (int i = 0; i < 16; ++i) {
    if (!fwd.valid[i]) continue;
    float lo = 1.0f, hi = 0.0f;
    for (const auto& r : regs) {
      if (r.hit[i]) {
        lo = std::min(lo, r.values[i]);
        hi = std::max(hi, r.values[i]);
      }
    }
    EXPECT_GE(fwd.values[i], lo);
    EXPECT_LE(fwd.values[i], hi);
    EXPECT_NEAR(fwd.values[i], back.values[i], 1e-7);  // float storage of a double mean
  }
  EXPECT_EQ(integrate(regs).values, fwd.values);
}

namespace {

ApertureScan ground_scan(const GroundTruthVolume& v, double spacing, int image_size) {
  const auto poses = plan_grid(24.0, spacing, 35.0, 15.0, 15.0);
  return render_scan(v, poses, CameraIntrinsics{image_size, 50.0});
}

}  // namespace

TEST(FocalStack, SingleSlice) {
  const GroundTruthVolume v = textured_ground(Dims3{16, 16, 4}, 30.0, 20.0, 5);
  const ApertureScan scan = ground_scan(v, 12.0, 128);
  const FocalStack s = build_focal_stack(scan, 5.0, 5.0, 1, FocalGrid{16, 16, 30.0});
  EXPECT_EQ(s.geometry.dims.d, 1);
  EXPECT_DOUBLE_EQ(s.geometry.heights[0], 5.0);
}

TEST(FocalStack, LinspaceHeightsAndRejects) {
  const GroundTruthVolume v = textured_ground(Dims3{16, 16, 4}, 30.0, 20.0, 5);
  const ApertureScan scan = ground_scan(v, 12.0, 64);
  const FocalStack s = build_focal_stack(scan, 0.0, 20.0, 5, FocalGrid{8, 8, 30.0});
  EXPECT_EQ(s.geometry.heights, (std::vector<double>{0.0, 5.0, 10.0, 15.0, 20.0}));
  EXPECT_THROW(build_focal_stack(scan, 20.0, 0.0, 5, FocalGrid{8, 8, 30.0}), Error);
  EXPECT_THROW(build_focal_stack(scan, 0.0, 40.0, 5, FocalGrid{8, 8, 30.0}), Error);
}

TEST(FocalStack, WorkerCountIsBitIdentical) {
  ForestSpec spec;
  spec.seed = 2;
  const GroundTruthVolume v = voxelize(generate_forest(spec), Dims3{24, 24, 12}, 20.0);
  const ApertureScan scan = ground_scan(v, 8.0, 96);
  const auto geo = v.stack_geometry();
  const FocalStack a = build_focal_stack(scan, geo, 1);
  const FocalStack b = build_focal_stack(scan, geo, 3);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.valid, b.valid);
}

TEST(FocalStack, InFocusGroundMatchesTruth) {
  const GroundTruthVolume v = textured_ground(Dims3{32, 32, 8}, 30.0, 20.0, 21);
  const ApertureScan scan = ground_scan(v, 6.0, 256);
  const FocalStack s = build_focal_stack(scan, v.stack_geometry());
  double sse = 0.0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      ASSERT_TRUE(s.is_valid(x, y, 0));
      const double e = s.at(x, y, 0) - v.at(x, y, 0);
      sse += e * e;
    }
  }
  EXPECT_LT(std::sqrt(sse / 1024.0), 1e-3);
}

TEST(FocalStack, OccluderBlurExtent) {
  // A bright voxel with top face at z, seen on a plane at f below it, is
  // spread over a square of side a (z - f) / (h - z) plus its own magnified size.
  GroundTruthVolume v = ground_only(Dims3{60, 60, 20}, 30.0, 20.0, 0.0f);
  set_voxel(v, 30, 30, 15, 1.0f);
  // A wide field of view lets every pose of the 24 m aperture see the voxel.
  const auto poses = plan_grid(24.0, 2.0, 35.0, 15.0, 15.0);
  const ApertureScan scan = render_scan(v, poses, CameraIntrinsics{128, 90.0});
  const double f = 4.0, z = 16.0, h = 35.0;
  const FocalStack s = build_focal_stack(scan, f, f, 1, FocalGrid{60, 60, 30.0});
  int x0 = 60, x1 = -1, y0 = 60, y1 = -1;
  for (int y = 0; y < 60; ++y) {
    for (int x = 0; x < 60; ++x) {
      if (s.at(x, y, 0) <= 0.0f) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  const double expect = 24.0 * (z - f) / (h - z) + 0.5 * (h - f) / (h - z);  // ~16 m
  EXPECT_NEAR((x1 - x0 + 1) * 0.5, expect, 0.15 * expect);
  EXPECT_NEAR((y1 - y0 + 1) * 0.5, expect, 0.15 * expect);
}

TEST(AnalyticSignal, SingleVoxelInFocus) {
  GroundTruthVolume v = ground_only(Dims3{16, 16, 16}, 16.0, 16.0, 0.0f);
  std::fill(v.occupied.begin(), v.occupied.end(), 0);
  std::fill(v.reflectance.begin(), v.reflectance.end(), GroundTruthVolume::kUnoccupied);
  set_voxel(v, 8, 8, 15, 0.6f);  // top layer: only the in-focus term contributes
  const auto out = analytic_focal_signal(v, ApertureSquare{8.0, 8.0, 24.0, 35.0}, 16.0);
  EXPECT_NEAR(out[8 * 16 + 8], double(0.6f), 1e-12);
  EXPECT_NEAR(out[8 * 16 + 7], 0.0, 1e-12);
}

TEST(AnalyticSignal, EmptyVolumeIsZero) {
  GroundTruthVolume v = ground_only(Dims3{8, 8, 8}, 8.0, 8.0, 0.0f);
  std::fill(v.occupied.begin(), v.occupied.end(), 0);
  for (double x : analytic_focal_signal(v, ApertureSquare{4.0, 4.0, 24.0, 35.0}, 3.0)) EXPECT_EQ(x, 0.0);
}
