#include "understory/camera.hpp"

#include <cmath>
#include <numbers>

#include "understory/error.hpp"

namespace understory {

void CameraIntrinsics::validate() const {
  require_input(fov_deg > 0.0 && fov_deg < 180.0, "field of view must lie in (0, 180) degrees");
  require_input(image_size >= 8, "image size must be at least 8 pixels");
}

double CameraIntrinsics::focal_px() const {
  const double half = fov_deg * std::numbers::pi / 360.0;
  return 0.5 * image_size / std::tan(half);
}

void CameraPose::validate() const {
  require_input(std::abs(orientation.norm() - 1.0) <= 1e-9, "pose quaternion must be unit length");
  require_input(position.allFinite(), "pose position must be finite");
}

std::optional<PixelCoord> project(const CameraPose& pose, const CameraIntrinsics& cam,
                                  const Eigen::Vector3d& world) {
  const Eigen::Vector3d c = pose.orientation.conjugate() * (world - pose.position);
  if (c.z() <= 0.0) return std::nullopt;
  const double f = cam.focal_px();
  const double half = 0.5 * cam.image_size;
  return PixelCoord{f * c.x() / c.z() + half - 0.5, f * c.y() / c.z() + half - 0.5};
}

Eigen::Vector3d pixel_ray(const CameraPose& pose, const CameraIntrinsics& cam, double col, double row) {
  const double f = cam.focal_px();
  const double half = 0.5 * cam.image_size;
  const Eigen::Vector3d c((col + 0.5 - half) / f, (row + 0.5 - half) / f, 1.0);
  return (pose.orientation * c).normalized();
}

double nadir_footprint(const CameraIntrinsics& cam, double height_above_plane) {
  return 2.0 * height_above_plane * std::tan(cam.fov_deg * std::numbers::pi / 360.0);
}

}  // namespace understory
