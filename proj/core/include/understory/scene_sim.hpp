#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "understory/camera.hpp"
#include "understory/grid.hpp"

namespace understory {

struct Range {
  double min = 0.0;
  double max = 0.0;

  bool valid() const { return min <= max; }
  friend bool operator==(const Range&, const Range&) = default;
};

/// Parameters of a procedural broadleaf plot. Lengths in metres, density in
/// trees per hectare.
struct ForestSpec {
  double plot_side = 30.0;
  double density = 220.0;
  Range height{5.0, 20.0};
  Range trunk_length{4.0, 8.0};
  Range trunk_diameter{0.20, 0.50};
  Range leaf_size{0.05, 0.20};
  Range crown_radius{1.5, 3.5};
  double leaves_per_m3 = 3.0;
  double crown_shell_inner = 0.5;  // inner/outer radius ratio of the leaf shell
  Range leaf_reflectance{0.4, 0.9};
  Range trunk_reflectance{0.1, 0.3};
  Range ground_reflectance{0.2, 0.6};
  double ground_texel = 0.25;         // ground texture raster pitch
  double ground_feature_size = 2.0;   // value-noise lattice spacing
  std::uint64_t seed = 1;

  void validate() const;
  /// round(density * plot area in hectares)
  int tree_count() const;
};

/// Planar leaf: centre plus two orthogonal half-edge vectors.
struct LeafQuad {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_u = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_v = Eigen::Vector3d::Zero();
  double reflectance = 0.0;

  std::array<Eigen::Vector3d, 4> corners() const;
};

struct Tree {
  double x = 0.0;
  double y = 0.0;
  double height = 0.0;
  double trunk_length = 0.0;
  double trunk_diameter = 0.0;
  double crown_radius = 0.0;
  double trunk_reflectance = 0.0;
  std::vector<LeafQuad> leaves;
};

/// Raster of ground reflectance covering the plot, texel (i, j) spanning
/// [i, i+1) x [j, j+1) times `texel`.
struct GroundTexture {
  int nx = 0;
  int ny = 0;
  double texel = 0.0;
  std::vector<float> values;

  static GroundTexture constant(double plot_side, double texel, float value);
  float at(int i, int j) const { return values[static_cast<std::size_t>(j) * nx + i]; }
  /// Area-weighted mean over an axis-aligned rectangle (clipped to the raster).
  double mean_over(double x0, double y0, double x1, double y1) const;
};

struct ForestScene {
  double plot_side = 0.0;
  std::vector<Tree> trees;
  GroundTexture ground;

  std::size_t leaf_count() const;
};

ForestScene generate_forest(const ForestSpec& spec);

/// Occupancy and area-weighted reflectance of every voxel touched by the
/// ground plane, a trunk cylinder or a leaf quad.
GroundTruthVolume voxelize(const ForestScene& scene, Dims3 dims, double z_top);

/// First-hit render of an opaque volume. Rays leaving the volume without a
/// hit (or missing it) get `background`. `workers` splits rows across threads;
/// the output does not depend on it.
Image render_aerial(const GroundTruthVolume& volume, const CameraPose& pose, const CameraIntrinsics& cam,
                    float background = 0.0f, int workers = 1);

/// Highest occupied z index per column; the ground guarantees a value.
DepthMap extract_top_layer(const GroundTruthVolume& volume);

struct VoxelHit {
  int x = 0;
  int y = 0;
  int z = 0;
  double t = 0.0;
};

/// Grid traversal from `origin` along unit `dir`; returns the first occupied
/// voxel. Axis ties are stepped in x, y, z order.
std::optional<VoxelHit> first_hit(const GroundTruthVolume& volume, const Eigen::Vector3d& origin,
                                  const Eigen::Vector3d& dir);

// Plain-text scene description, one primitive per line.
void write_scene(std::ostream& out, const ForestScene& scene);
ForestScene read_scene(std::istream& in);

}  // namespace understory
