#include "understory/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "understory/error.hpp"

namespace understory {
namespace {

struct MeanStd {
  double mean = 0.0;
  double sd = 0.0;
};

template <typename Get>
MeanStd mean_std(std::size_t n, Get get) {
  MeanStd m;
  if (n == 0) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += get(i);
  m.mean = s / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = get(i) - m.mean;
    ss += d * d;
  }
  m.sd = std::sqrt(ss / static_cast<double>(n));
  return m;
}

void require_lateral_match(const StackGeometry& g, const DepthMap& depth) {
  require_input(depth.w == g.dims.w && depth.h == g.dims.h, "depth map does not cover the stack's lateral grid");
}

}  // namespace

double sensor_map_value(double r, const SensorStats& stats) {
  return stats.sigma_c * (r - stats.mu_r) / stats.sigma_r + stats.mu_c;
}

std::vector<std::size_t> footprint_points(const StackGeometry& geometry, const DepthMap& top_layer,
                                          const CameraPose& center_pose, const CameraIntrinsics& cam) {
  geometry.validate();
  require_lateral_match(geometry, top_layer);
  const double lo = -0.5;
  const double hi = cam.image_size - 0.5;
  std::vector<std::size_t> out;
  for (int y = 0; y < geometry.dims.h; ++y) {
    for (int x = 0; x < geometry.dims.w; ++x) {
      const int z = top_layer.at(x, y);
      if (z == DepthMap::kGap) continue;
      require_input(z >= 0 && z < geometry.dims.d, "depth map layer out of range");
      const Eigen::Vector3d p(geometry.center_x(x), geometry.center_y(y), geometry.heights[static_cast<std::size_t>(z)]);
      const auto px = project(center_pose, cam, p);
      if (!px || px->col < lo || px->col > hi || px->row < lo || px->row > hi) continue;
      out.push_back(geometry.dims.index(x, y, z));
    }
  }
  return out;
}

SensorStats sensor_stats(const ReflectanceStack& stack, const DepthMap& top_layer, const Image& center_image,
                         const CameraPose& center_pose, const CameraIntrinsics& cam) {
  require_input(center_image.width == cam.image_size && center_image.height == cam.image_size,
                "centre image does not match the camera intrinsics");
  const auto idx = footprint_points(stack.geometry, top_layer, center_pose, cam);
  const MeanStd c = mean_std(center_image.pixels.size(), [&](std::size_t i) { return double(center_image.pixels[i]); });
  const MeanStd r = mean_std(idx.size(), [&](std::size_t i) { return double(stack.values[idx[i]]); });
  require_input(c.sd > 0.0, "centre image has zero reflectance spread");
  require_input(idx.size() >= 2 && r.sd > 0.0,
                "degenerate stack statistics: " + std::to_string(idx.size()) +
                    " footprint points with zero spread; sensor mapping is undefined");
  return SensorStats{c.mean, c.sd, r.mean, r.sd, idx.size()};
}

MappedStack sensor_map(const ReflectanceStack& stack, const SensorStats& stats) {
  require_input(stats.sigma_r > 0.0 && stats.sigma_c > 0.0, "sensor statistics need positive spreads");
  MappedStack out;
  out.geometry = stack.geometry;
  out.stats = stats;
  out.values.resize(stack.values.size());
  for (std::size_t i = 0; i < stack.values.size(); ++i) out.values[i] = sensor_map_value(stack.values[i], stats);
  return out;
}

MappedStack sensor_map(const ReflectanceStack& stack, const DepthMap& top_layer, const Image& center_image,
                       const CameraPose& center_pose, const CameraIntrinsics& cam) {
  return sensor_map(stack, sensor_stats(stack, top_layer, center_image, center_pose, cam));
}

float ndvi_value(double nir, double red, bool* zero_sum) {
  const double s = nir + red;
  if (zero_sum) *zero_sum = (s == 0.0);
  if (s == 0.0) return 0.0f;
  return static_cast<float>((nir - red) / s);
}

IndexStack ndvi(const StackGeometry& geometry, std::span<const double> nir, std::span<const double> red) {
  geometry.validate();
  require_input(nir.size() == geometry.dims.count() && red.size() == geometry.dims.count(),
                "NIR and RED stacks must match the geometry");
  IndexStack out;
  out.geometry = geometry;
  out.values.resize(nir.size());
  out.mask.assign(nir.size(), 1);
  out.zero_sum.assign(nir.size(), 0);
  for (std::size_t i = 0; i < nir.size(); ++i) {
    bool z = false;
    out.values[i] = ndvi_value(nir[i], red[i], &z);
    out.zero_sum[i] = z ? 1 : 0;
  }
  return out;
}

IndexStack ndvi(const MappedStack& nir, const MappedStack& red) {
  require_input(nir.geometry == red.geometry, "NIR and RED stacks differ in geometry");
  return ndvi(nir.geometry, nir.values, red.values);
}

IndexStack ndvi(const ReflectanceStack& nir, const ReflectanceStack& red) {
  require_input(nir.geometry == red.geometry, "NIR and RED stacks differ in geometry");
  std::vector<double> a(nir.values.begin(), nir.values.end());
  std::vector<double> b(red.values.begin(), red.values.end());
  return ndvi(nir.geometry, a, b);
}

DepthMap fill_gaps_nearest(const DepthMap& depth) {
  require_input(depth.w > 0 && depth.h > 0 && depth.z.size() == static_cast<std::size_t>(depth.w) * depth.h,
                "depth map is malformed");
  require_input(std::any_of(depth.z.begin(), depth.z.end(), [](int v) { return v != DepthMap::kGap; }),
                "depth map has no known column");
  if (!depth.has_gaps()) return depth;
  DepthMap out = depth;
  for (int y = 0; y < depth.h; ++y) {
    for (int x = 0; x < depth.w; ++x) {
      if (depth.at(x, y) != DepthMap::kGap) continue;
      // Ring search by Chebyshev radius; stop once no closer hit can follow.
      long best_d2 = std::numeric_limits<long>::max();
      std::size_t best_idx = 0;
      const int rmax = std::max(depth.w, depth.h);
      for (int r = 1; r <= rmax; ++r) {
        if (static_cast<long>(r) * r > best_d2) break;
        for (int j = y - r; j <= y + r; ++j) {
          if (j < 0 || j >= depth.h) continue;
          const bool edge_row = (j == y - r || j == y + r);
          for (int i = x - r; i <= x + r; i += edge_row ? 1 : 2 * r) {
            if (i < 0 || i >= depth.w || depth.at(i, j) == DepthMap::kGap) continue;
            const long d2 = static_cast<long>(i - x) * (i - x) + static_cast<long>(j - y) * (j - y);
            const std::size_t idx = static_cast<std::size_t>(j) * depth.w + i;
            if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
              best_d2 = d2;
              best_idx = idx;
            }
          }
        }
      }
      out.at(x, y) = depth.z[best_idx];
    }
  }
  return out;
}

IndexStack remove_above_canopy(const IndexStack& index, const DepthMap& top_layer) {
  const StackGeometry& g = index.geometry;
  require_lateral_match(g, top_layer);
  const DepthMap filled = fill_gaps_nearest(top_layer);
  IndexStack out = index;
  for (int y = 0; y < g.dims.h; ++y) {
    for (int x = 0; x < g.dims.w; ++x) {
      for (int z = filled.at(x, y) + 1; z < g.dims.d; ++z) {
        const std::size_t i = g.dims.index(x, y, std::max(z, 0));
        out.values[i] = IndexStack::kSentinel;
        out.mask[i] = 0;
      }
    }
  }
  return out;
}

IndexStack range_filter(const IndexStack& index, double lo, double hi) {
  require_input(lo <= hi, "range filter bounds are inverted");
  IndexStack out = index;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (out.mask[i] && out.values[i] >= lo && out.values[i] <= hi) continue;
    out.values[i] = IndexStack::kSentinel;
    out.mask[i] = 0;
  }
  return out;
}

IndexStack crop(const IndexStack& index, const VoxelBox& box) {
  const StackGeometry& g = index.geometry;
  require_input(box.x0 < box.x1 && box.y0 < box.y1 && box.z0 < box.z1, "crop box is empty or inverted");
  require_input(box.x0 >= 0 && box.y0 >= 0 && box.z0 >= 0 && box.x1 <= g.dims.w && box.y1 <= g.dims.h &&
                    box.z1 <= g.dims.d,
                "crop box exceeds the stack dims " + to_string(g.dims));
  IndexStack out;
  StackGeometry& c = out.geometry;
  c.dims = Dims3{box.x1 - box.x0, box.y1 - box.y0, box.z1 - box.z0};
  c.origin_x = g.origin_x + box.x0 * g.cell_width();
  c.origin_y = g.origin_y + box.y0 * g.cell_height();
  c.extent = c.dims.w * g.cell_width();
  const double ey = c.dims.h * g.cell_height();
  c.extent_y = ey == c.extent ? 0.0 : ey;
  c.heights.assign(g.heights.begin() + box.z0, g.heights.begin() + box.z1);
  const std::size_t n = c.dims.count();
  out.values.resize(n);
  out.mask.resize(n);
  out.zero_sum.resize(n);
  for (int z = 0; z < c.dims.d; ++z) {
    for (int y = 0; y < c.dims.h; ++y) {
      for (int x = 0; x < c.dims.w; ++x) {
        const std::size_t s = g.dims.index(x + box.x0, y + box.y0, z + box.z0);
        const std::size_t d = c.dims.index(x, y, z);
        out.values[d] = index.values[s];
        out.mask[d] = index.mask[s];
        out.zero_sum[d] = index.zero_sum.empty() ? 0 : index.zero_sum[s];
      }
    }
  }
  return out;
}

BiomassResult biomass_fraction(const IndexStack& index, double threshold, double voxel_volume) {
  require_input(voxel_volume > 0.0, "voxel volume must be positive");
  BiomassResult r;
  for (std::size_t i = 0; i < index.values.size(); ++i) {
    if (!index.mask[i]) continue;
    ++r.total_count;
    if (index.values[i] >= threshold) ++r.kept_count;
  }
  require_input(r.total_count > 0, "index stack has an empty mask");
  r.fraction = static_cast<double>(r.kept_count) / static_cast<double>(r.total_count);
  r.kept_volume = static_cast<double>(r.kept_count) * voxel_volume;
  r.excluded_volume = static_cast<double>(r.total_count - r.kept_count) * voxel_volume;
  r.total_volume = static_cast<double>(r.total_count) * voxel_volume;
  return r;
}

namespace {

// Nearest of n cell centres (i + 0.5) * pitch, ties towards the lower index.
int nearest_cell(double coord, double pitch, int n) {
  const double t = coord / pitch - 0.5;
  const int i = static_cast<int>(std::ceil(t - 0.5));
  return std::clamp(i, 0, n - 1);
}

int nearest_layer(double z, const std::vector<double>& heights) {
  const auto it = std::lower_bound(heights.begin(), heights.end(), z);
  if (it == heights.begin()) return 0;
  if (it == heights.end()) return static_cast<int>(heights.size()) - 1;
  const int hi = static_cast<int>(it - heights.begin());
  return (*it - z < z - *(it - 1)) ? hi : hi - 1;
}

}  // namespace

PointCloudDepth ingest_top_layer_pointcloud(std::span<const Eigen::Vector3d> points, const StackGeometry& geometry) {
  geometry.validate();
  require_input(!points.empty(), "point cloud is empty");
  PointCloudDepth out;
  out.depth = DepthMap(geometry.dims.w, geometry.dims.h);
  const double x_end = geometry.origin_x + geometry.extent;
  const double y_end = geometry.origin_y + geometry.span_y();
  for (const auto& p : points) {
    if (!p.allFinite() || p.x() < geometry.origin_x || p.x() > x_end || p.y() < geometry.origin_y || p.y() > y_end ||
        p.z() < 0.0 || p.z() > geometry.heights.back()) {
      ++out.dropped;
      continue;
    }
    const int i = nearest_cell(p.x() - geometry.origin_x, geometry.cell_width(), geometry.dims.w);
    const int j = nearest_cell(p.y() - geometry.origin_y, geometry.cell_height(), geometry.dims.h);
    const int k = nearest_layer(p.z(), geometry.heights);
    int& cell = out.depth.at(i, j);
    cell = std::max(cell, k);
  }
  return out;
}

}  // namespace understory
