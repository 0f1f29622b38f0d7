#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "understory/camera.hpp"
#include "understory/grid.hpp"

namespace understory {

/// Axis-aligned rectangle in plot coordinates.
struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool contains(const Rect& o, double tol = 0.0) const {
    return o.x0 >= x0 - tol && o.y0 >= y0 - tol && o.x1 <= x1 + tol && o.y1 <= y1 + tol;
  }
};

/// Square synthetic aperture at a fixed altitude.
struct ApertureSquare {
  double center_x = 0.0;
  double center_y = 0.0;
  double side = 0.0;
  double altitude = 0.0;

  Rect rect() const {
    const double h = 0.5 * side;
    return {center_x - h, center_y - h, center_x + h, center_y + h};
  }

  /// Cross-section at height z of the pyramid spanned by the apex point
  /// (x, y, f) and the aperture square: each corner moves from the apex
  /// towards the matching aperture corner by (z - f) / (altitude - f).
  Rect frustum_section(double apex_x, double apex_y, double f, double z) const;
};

/// Multi-view aerial capture over a planar aperture.
struct ApertureScan {
  std::vector<CameraPose> poses;
  CameraIntrinsics intrinsics;
  std::vector<Image> images;
  double aperture_side = 0.0;  // extent of the pose grid
  double altitude = 0.0;

  /// Fills aperture_side and altitude from the poses and checks invariants.
  void finalize();
  void validate() const;
  ApertureSquare square() const;
  /// Index of the pose closest to the aperture centre.
  std::size_t center_pose_index() const;
};

/// Regular nadir grid covering an aperture square, row by row (y then x).
std::vector<CameraPose> plan_grid(double aperture_side, double spacing, double altitude, double center_x,
                                  double center_y);

/// Renders one image per pose from a ground-truth volume.
ApertureScan render_scan(const GroundTruthVolume& volume, const std::vector<CameraPose>& poses,
                         const CameraIntrinsics& cam, float background = 0.0f, int workers = 1);

struct FocalGrid {
  int w = 0;
  int h = 0;
  double extent = 0.0;
};

/// One aerial image resampled onto a focal plane.
struct RegisteredImage {
  int w = 0;
  int h = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> hit;
};

/// Projects the centre of every focal-plane cell (x, y, f) into the image and
/// samples it bilinearly. Cells outside the image are left unhit.
RegisteredImage project_to_focal_plane(const Image& image, const CameraPose& pose, const CameraIntrinsics& cam,
                                       double focal_height, const FocalGrid& grid);

struct IntegralImage {
  int w = 0;
  int h = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> valid;
  std::vector<std::uint32_t> hits;
};

/// Per-cell mean over the registered images that hit it, accumulated in
/// argument order in double precision.
IntegralImage integrate(std::span<const RegisteredImage> registered);

/// Focal stack with `depth` slices linearly spaced over [z_min, z_max].
FocalStack build_focal_stack(const ApertureScan& scan, double z_min, double z_max, int depth, const FocalGrid& grid,
                             int workers = 1);

/// Focal stack on an explicit geometry (e.g. aligned with a ground-truth volume).
FocalStack build_focal_stack(const ApertureScan& scan, const StackGeometry& geometry, int workers = 1);

/// Axial defocus attenuation 1 / (1 + ((a / f) |f - z|)^2).
double defocus_weight(double aperture, double focal, double z);

/// Brute-force evaluation of the axial defocus model for one focal height:
/// every voxel layer at or above `focal_height` contributes its mean
/// reflectance over the receptive-field section, weighted by defocus_weight.
/// Unoccupied voxels count as zero. Diagnostic only.
std::vector<double> analytic_focal_signal(const GroundTruthVolume& volume, const ApertureSquare& aperture,
                                          double focal_height);

/// Visibility of uniform occlusion volumes, 1 - density^2.
double expected_visibility(double density);

}  // namespace understory
