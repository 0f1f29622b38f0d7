#pragma once

#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace understory {

/// Square pinhole camera; the principal point is the image centre.
struct CameraIntrinsics {
  int image_size = 440;
  double fov_deg = 50.0;

  void validate() const;
  /// Focal length in pixels.
  double focal_px() const;
};

/// Camera pose in world coordinates (z up, ground at z = 0).
///
/// The orientation maps camera axes to world axes. The camera looks along
/// its +z axis, image columns grow along camera +x and rows along camera +y.
/// The nadir orientation (a half turn about world x) therefore looks straight
/// down with image rows running towards world -y.
struct CameraPose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = nadir();

  static Eigen::Quaterniond nadir() { return Eigen::Quaterniond(0.0, 1.0, 0.0, 0.0); }
  static CameraPose nadir_at(double x, double y, double z) {
    CameraPose p;
    p.position = Eigen::Vector3d(x, y, z);
    return p;
  }

  void validate() const;
};

/// Continuous pixel coordinates: integer values are pixel centres.
struct PixelCoord {
  double col = 0.0;
  double row = 0.0;
};

/// Projects a world point; empty when the point is behind the camera.
std::optional<PixelCoord> project(const CameraPose& pose, const CameraIntrinsics& cam,
                                  const Eigen::Vector3d& world);

/// Unit world-space direction of the ray through a continuous pixel coordinate.
Eigen::Vector3d pixel_ray(const CameraPose& pose, const CameraIntrinsics& cam, double col, double row);

/// Side length of the square ground footprint seen by a nadir camera at the
/// given height above the plane.
double nadir_footprint(const CameraIntrinsics& cam, double height_above_plane);

}  // namespace understory
