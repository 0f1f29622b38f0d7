#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "understory/error.hpp"

namespace understory {

/// Voxel counts along x (width), y (height) and z (depth, up).
struct Dims3 {
  int w = 0;
  int h = 0;
  int d = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(d);
  }
  std::size_t layer_count() const { return static_cast<std::size_t>(w) * static_cast<std::size_t>(h); }

  // x fastest, then y, then z.
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(h) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(w) +
           static_cast<std::size_t>(x);
  }

  bool contains(int x, int y, int z) const { return x >= 0 && y >= 0 && z >= 0 && x < w && y < h && z < d; }

  friend bool operator==(const Dims3&, const Dims3&) = default;
};

std::string to_string(const Dims3& dims);

/// Receptive-field patch tensor size (lateral w x h, axial d).
struct PatchDims {
  int w = 2;
  int h = 2;
  int d = 8;

  std::size_t count() const {
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(d);
  }
  friend bool operator==(const PatchDims&, const PatchDims&) = default;
};

/// Row-major single-channel image; row 0 is the top of the image.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

/// Per-column z index of the topmost surface. Columns without a value hold kGap.
struct DepthMap {
  static constexpr int kGap = -1;

  int w = 0;
  int h = 0;
  std::vector<int> z;

  DepthMap() = default;
  DepthMap(int w_, int h_, int fill = kGap)
      : w(w_), h(h_), z(static_cast<std::size_t>(w_) * static_cast<std::size_t>(h_), fill) {}

  int& at(int x, int y) { return z[static_cast<std::size_t>(y) * w + x]; }
  int at(int x, int y) const { return z[static_cast<std::size_t>(y) * w + x]; }
  bool has_gaps() const;
};

/// Lateral grid plus per-layer heights shared by every stack type.
///
/// Cells tile [0, extent] x [0, extent] in plot coordinates; cell (i, j) is
/// centred at ((i + 0.5) * extent / w, (j + 0.5) * extent / h). Layer k sits
/// at world height heights[k]; heights ascend strictly. Cropped sub-stacks
/// carry a lateral origin and may have a separate y extent.
struct StackGeometry {
  Dims3 dims;
  double extent = 0.0;
  std::vector<double> heights;
  double origin_x = 0.0;
  double origin_y = 0.0;
  double extent_y = 0.0;  // 0: same as extent

  double span_y() const { return extent_y > 0.0 ? extent_y : extent; }
  double cell_width() const { return extent / dims.w; }
  double cell_height() const { return span_y() / dims.h; }
  double center_x(int i) const { return origin_x + (i + 0.5) * cell_width(); }
  double center_y(int j) const { return origin_y + (j + 0.5) * cell_height(); }
  /// Square grid anchored at the plot origin.
  bool plot_aligned() const { return origin_x == 0.0 && origin_y == 0.0 && (extent_y == 0.0 || extent_y == extent); }

  void validate() const;

  friend bool operator==(const StackGeometry&, const StackGeometry&) = default;
};

/// Integrated (uncorrected) synthetic-aperture signal; one value per cell
/// and focal slice. Cells no image reached are flagged in `valid`.
struct FocalStack {
  StackGeometry geometry;
  std::vector<float> values;
  std::vector<std::uint8_t> valid;

  float at(int x, int y, int z) const { return values[geometry.dims.index(x, y, z)]; }
  bool is_valid(int x, int y, int z) const { return valid[geometry.dims.index(x, y, z)] != 0; }
};

/// Focal stack after per-layer correction, clamped to [0, 1].
struct ReflectanceStack {
  StackGeometry geometry;
  std::vector<float> values;
  std::vector<std::string> provenance;  // model id per layer

  float at(int x, int y, int z) const { return values[geometry.dims.index(x, y, z)]; }
};

/// Voxel-wise vegetation index. Voxels above the canopy hold kSentinel and
/// have mask == 0.
struct IndexStack {
  static constexpr float kSentinel = -1.01f;

  StackGeometry geometry;
  std::vector<float> values;
  std::vector<std::uint8_t> mask;
  std::vector<std::uint8_t> zero_sum;  // NIR + RED == 0 at this voxel

  float at(int x, int y, int z) const { return values[geometry.dims.index(x, y, z)]; }
};

/// Ground-truth reflectance and occupancy of a simulated plot.
///
/// The volume spans [0, extent_xy]^2 x [0, z_top]; z index 0 is the ground
/// layer and is always fully occupied.
struct GroundTruthVolume {
  static constexpr float kUnoccupied = -1.0f;

  Dims3 dims;
  double extent_xy = 0.0;
  double z_top = 0.0;
  std::vector<float> reflectance;
  std::vector<std::uint8_t> occupied;

  double pitch_x() const { return extent_xy / dims.w; }
  double pitch_y() const { return extent_xy / dims.h; }
  double pitch_z() const { return z_top / dims.d; }

  bool is_occupied(int x, int y, int z) const { return occupied[dims.index(x, y, z)] != 0; }
  float at(int x, int y, int z) const { return reflectance[dims.index(x, y, z)]; }

  std::size_t occupied_count() const;

  /// Stack geometry aligned with this volume: layer k is focused on the top
  /// face of voxel layer k, i.e. at height (k + 1) * pitch_z.
  StackGeometry stack_geometry() const;
};

}  // namespace understory
