#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "understory/scene_sim.hpp"

namespace understory {

std::optional<VoxelHit> first_hit(const GroundTruthVolume& volume, const Eigen::Vector3d& origin,
                                  const Eigen::Vector3d& dir) {
  const Dims3& d = volume.dims;
  const Eigen::Vector3d pitch(volume.pitch_x(), volume.pitch_y(), volume.pitch_z());
  const Eigen::Vector3d hi(volume.extent_xy, volume.extent_xy, volume.z_top);
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Slab test against the volume box.
  double t0 = 0.0;
  double t1 = kInf;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < 0.0 || origin[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (0.0 - origin[a]) / dir[a];
    double tb = (hi[a] - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return std::nullopt;

  const Eigen::Vector3d entry = origin + t0 * dir;
  const int n[3] = {d.w, d.h, d.d};
  int cell[3];
  int step[3];
  double t_max[3];
  double t_delta[3];
  for (int a = 0; a < 3; ++a) {
    cell[a] = std::clamp(static_cast<int>(std::floor(entry[a] / pitch[a])), 0, n[a] - 1);
    if (dir[a] > 0.0) {
      step[a] = 1;
      t_max[a] = t0 + ((cell[a] + 1) * pitch[a] - entry[a]) / dir[a];
      t_delta[a] = pitch[a] / dir[a];
    } else if (dir[a] < 0.0) {
      step[a] = -1;
      t_max[a] = t0 + (cell[a] * pitch[a] - entry[a]) / dir[a];
      t_delta[a] = -pitch[a] / dir[a];
    } else {
      step[a] = 0;
      t_max[a] = kInf;
      t_delta[a] = kInf;
    }
  }

  double t = t0;
  for (;;) {
    if (volume.is_occupied(cell[0], cell[1], cell[2])) return VoxelHit{cell[0], cell[1], cell[2], t};
    // Smallest t_max; ties go to the lowest axis.
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    if (t_max[axis] > t1) return std::nullopt;
    t = t_max[axis];
    cell[axis] += step[axis];
    if (cell[axis] < 0 || cell[axis] >= n[axis]) return std::nullopt;
    t_max[axis] += t_delta[axis];
  }
}

Image render_aerial(const GroundTruthVolume& volume, const CameraPose& pose, const CameraIntrinsics& cam,
                    float background, int workers) {
  cam.validate();
  pose.validate();
  require_input(pose.position.z() > volume.z_top, "camera must fly above the volume top (z_top)");

  Image img(cam.image_size, cam.image_size, background);
  auto render_rows = [&](int row_begin, int row_end) {
    for (int row = row_begin; row < row_end; ++row) {
      for (int col = 0; col < cam.image_size; ++col) {
        const Eigen::Vector3d dir = pixel_ray(pose, cam, col, row);
        if (const auto hit = first_hit(volume, pose.position, dir)) {
          img.at(row, col) = volume.at(hit->x, hit->y, hit->z);
        }
      }
    }
  };

  workers = std::clamp(workers, 1, cam.image_size);
  if (workers == 1) {
    render_rows(0, cam.image_size);
    return img;
  }
  std::vector<std::thread> pool;
  const int chunk = (cam.image_size + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int begin = w * chunk;
    const int end = std::min(cam.image_size, begin + chunk);
    if (begin < end) pool.emplace_back(render_rows, begin, end);
  }
  for (auto& t : pool) t.join();
  return img;
}

}  // namespace understory
