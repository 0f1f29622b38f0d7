#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "understory/camera.hpp"
#include "understory/grid.hpp"

namespace understory {

/// Reflectance statistics of the centre camera image (C) and of the stack's
/// top-layer points inside the same field of view (R).
struct SensorStats {
  double mu_c = 0.0;
  double sigma_c = 0.0;
  double mu_r = 0.0;
  double sigma_r = 0.0;
  std::size_t footprint_count = 0;
};

/// Linear statistics match sigma_c * (r - mu_r) / sigma_r + mu_c.
double sensor_map_value(double r, const SensorStats& stats);

/// Stack indices of top-layer voxels whose world point projects inside the
/// centre image. Gap columns are skipped.
std::vector<std::size_t> footprint_points(const StackGeometry& geometry, const DepthMap& top_layer,
                                          const CameraPose& center_pose, const CameraIntrinsics& cam);

/// Population mean/std of the centre image and of the stack over the footprint.
SensorStats sensor_stats(const ReflectanceStack& stack, const DepthMap& top_layer, const Image& center_image,
                         const CameraPose& center_pose, const CameraIntrinsics& cam);

/// Stack after sensor mapping, kept in double precision.
struct MappedStack {
  StackGeometry geometry;
  std::vector<double> values;
  SensorStats stats;
};

MappedStack sensor_map(const ReflectanceStack& stack, const SensorStats& stats);
MappedStack sensor_map(const ReflectanceStack& stack, const DepthMap& top_layer, const Image& center_image,
                       const CameraPose& center_pose, const CameraIntrinsics& cam);

/// (nir - red) / (nir + red) per voxel; a zero sum gives 0 and sets zero_sum.
float ndvi_value(double nir, double red, bool* zero_sum = nullptr);
IndexStack ndvi(const StackGeometry& geometry, std::span<const double> nir, std::span<const double> red);
IndexStack ndvi(const MappedStack& nir, const MappedStack& red);
IndexStack ndvi(const ReflectanceStack& nir, const ReflectanceStack& red);

/// Fills gap columns from the nearest known column (Euclidean in cell units,
/// ties to the lower row-major index).
DepthMap fill_gaps_nearest(const DepthMap& depth);

/// Voxels strictly above the (gap-filled) top layer become the sentinel with
/// mask cleared; everything else is untouched.
IndexStack remove_above_canopy(const IndexStack& index, const DepthMap& top_layer);

/// Keeps masked values in [lo, hi]; every other voxel becomes the sentinel with mask cleared.
IndexStack range_filter(const IndexStack& index, double lo, double hi);

/// Half-open voxel box [x0, x1) x [y0, y1) x [z0, z1).
struct VoxelBox {
  int x0 = 0, y0 = 0, z0 = 0;
  int x1 = 0, y1 = 0, z1 = 0;
};

/// Sub-stack inside the box; geometry origin, extents and heights follow the box.
IndexStack crop(const IndexStack& index, const VoxelBox& box);

struct BiomassResult {
  double fraction = 0.0;
  std::size_t kept_count = 0;
  std::size_t total_count = 0;
  double kept_volume = 0.0;
  double excluded_volume = 0.0;
  double total_volume = 0.0;
};

/// Share of masked voxels with index >= threshold.
BiomassResult biomass_fraction(const IndexStack& index, double threshold, double voxel_volume);

struct PointCloudDepth {
  DepthMap depth;
  std::size_t dropped = 0;  // points outside the stack bounds
};

/// Per-column maximum layer of the points. Points snap to the nearest lateral
/// cell centre and nearest layer height, ties to the lower index.
PointCloudDepth ingest_top_layer_pointcloud(std::span<const Eigen::Vector3d> points, const StackGeometry& geometry);

}  // namespace understory
