#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "understory/grid.hpp"
#include "understory/rng.hpp"
#include "understory/scene_sim.hpp"

namespace understory::testing {

// Volume with only the ground layer occupied.
inline GroundTruthVolume ground_only(Dims3 dims, double extent, double z_top, float value) {
  GroundTruthVolume v;
  v.dims = dims;
  v.extent_xy = extent;
  v.z_top = z_top;
  v.reflectance.assign(dims.count(), GroundTruthVolume::kUnoccupied);
  v.occupied.assign(dims.count(), 0);
  for (int y = 0; y < dims.h; ++y) {
    for (int x = 0; x < dims.w; ++x) {
      v.reflectance[dims.index(x, y, 0)] = value;
      v.occupied[dims.index(x, y, 0)] = 1;
    }
  }
  return v;
}

inline void set_voxel(GroundTruthVolume& v, int x, int y, int z, float value) {
  v.reflectance[v.dims.index(x, y, z)] = value;
  v.occupied[v.dims.index(x, y, z)] = 1;
}

// Ground layer with a random texture in [lo, hi].
inline GroundTruthVolume textured_ground(Dims3 dims, double extent, double z_top, std::uint64_t seed,
                                         double lo = 0.2, double hi = 0.8) {
  GroundTruthVolume v = ground_only(dims, extent, z_top, 0.0f);
  Rng rng(seed);
  for (int y = 0; y < dims.h; ++y) {
    for (int x = 0; x < dims.w; ++x) set_voxel(v, x, y, 0, static_cast<float>(rng.uniform(lo, hi)));
  }
  return v;
}

inline ForestScene empty_scene(double side, float ground) {
  ForestScene s;
  s.plot_side = side;
  s.ground = GroundTexture::constant(side, 0.25, ground);
  return s;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("understory_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace understory::testing
