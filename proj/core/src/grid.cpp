#include "understory/grid.hpp"

#include <algorithm>

namespace understory {

std::string to_string(const Dims3& dims) {
  return std::to_string(dims.w) + "x" + std::to_string(dims.h) + "x" + std::to_string(dims.d);
}

bool DepthMap::has_gaps() const {
  return std::any_of(z.begin(), z.end(), [](int v) { return v == kGap; });
}

void StackGeometry::validate() const {
  require_input(dims.w > 0 && dims.h > 0 && dims.d > 0, "stack dims must be positive, got " + to_string(dims));
  require_input(extent > 0.0 && extent_y >= 0.0, "stack extent must be positive");
  require_input(heights.size() == static_cast<std::size_t>(dims.d), "one focal height per layer required");
  for (std::size_t k = 1; k < heights.size(); ++k) {
    require_input(heights[k] > heights[k - 1], "focal heights must ascend strictly");
  }
}

std::size_t GroundTruthVolume::occupied_count() const {
  return static_cast<std::size_t>(std::count(occupied.begin(), occupied.end(), std::uint8_t{1}));
}

StackGeometry GroundTruthVolume::stack_geometry() const {
  StackGeometry g;
  g.dims = dims;
  g.extent = extent_xy;
  g.heights.resize(static_cast<std::size_t>(dims.d));
  for (int k = 0; k < dims.d; ++k) g.heights[static_cast<std::size_t>(k)] = (k + 1) * pitch_z();
  return g;
}

}  // namespace understory
