#include <algorithm>
#include <cmath>
#include <numbers>

#include "understory/scene_sim.hpp"

namespace understory {
namespace {

struct Accumulator {
  std::vector<double> weight;
  std::vector<double> weighted;

  explicit Accumulator(std::size_t n) : weight(n, 0.0), weighted(n, 0.0) {}

  void add(std::size_t idx, double w, double reflectance) {
    weight[idx] += w;
    weighted[idx] += w * reflectance;
  }
};

using Polygon = std::vector<Eigen::Vector3d>;

// Sutherland-Hodgman against the half-space sign * p[axis] <= sign * bound.
Polygon clip(const Polygon& poly, int axis, double bound, double sign) {
  Polygon out;
  if (poly.empty()) return out;
  out.reserve(poly.size() + 2);
  auto inside = [&](const Eigen::Vector3d& p) { return sign * (p[axis] - bound) <= 0.0; };
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Eigen::Vector3d& a = poly[i];
    const Eigen::Vector3d& b = poly[(i + 1) % poly.size()];
    const bool ina = inside(a);
    const bool inb = inside(b);
    if (ina) out.push_back(a);
    if (ina != inb) {
      const double t = (bound - a[axis]) / (b[axis] - a[axis]);
      Eigen::Vector3d p = a + t * (b - a);
      p[axis] = bound;
      out.push_back(p);
    }
  }
  return out;
}

double polygon_area(const Polygon& poly) {
  if (poly.size() < 3) return 0.0;
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (std::size_t i = 1; i + 1 < poly.size(); ++i) acc += (poly[i] - poly[0]).cross(poly[i + 1] - poly[0]);
  return 0.5 * acc.norm();
}

struct Grid {
  Dims3 dims;
  double px, py, pz;

  int cell(double v, double pitch, int n) const {
    return std::clamp(static_cast<int>(std::floor(v / pitch)), 0, n - 1);
  }
};

void add_leaf(const LeafQuad& leaf, const Grid& g, Accumulator& acc) {
  const auto corners = leaf.corners();
  Eigen::Vector3d lo = corners[0];
  Eigen::Vector3d hi = corners[0];
  for (const auto& c : corners) {
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  const double zmax = g.pz * g.dims.d;
  const double xmax = g.px * g.dims.w;
  const double ymax = g.py * g.dims.h;
  if (hi.x() <= 0.0 || hi.y() <= 0.0 || hi.z() <= 0.0 || lo.x() >= xmax || lo.y() >= ymax || lo.z() >= zmax) return;

  const int x0 = g.cell(lo.x(), g.px, g.dims.w), x1 = g.cell(hi.x(), g.px, g.dims.w);
  const int y0 = g.cell(lo.y(), g.py, g.dims.h), y1 = g.cell(hi.y(), g.py, g.dims.h);
  const int z0 = g.cell(lo.z(), g.pz, g.dims.d), z1 = g.cell(hi.z(), g.pz, g.dims.d);
  const Polygon quad(corners.begin(), corners.end());
  for (int z = z0; z <= z1; ++z) {
    Polygon pz = clip(clip(quad, 2, z * g.pz, -1.0), 2, (z + 1) * g.pz, 1.0);
    if (pz.size() < 3) continue;
    for (int y = y0; y <= y1; ++y) {
      Polygon py = clip(clip(pz, 1, y * g.py, -1.0), 1, (y + 1) * g.py, 1.0);
      if (py.size() < 3) continue;
      for (int x = x0; x <= x1; ++x) {
        const Polygon px = clip(clip(py, 0, x * g.px, -1.0), 0, (x + 1) * g.px, 1.0);
        const double area = polygon_area(px);
        if (area > 0.0) acc.add(g.dims.index(x, y, z), area, leaf.reflectance);
      }
    }
  }
}

// Lateral trunk surface inside one voxel column, by arc sampling.
double arc_fraction_in_rect(double cx, double cy, double r, double x0, double y0, double x1, double y1) {
  constexpr int kSamples = 256;
  int inside = 0;
  for (int k = 0; k < kSamples; ++k) {
    const double a = (k + 0.5) * 2.0 * std::numbers::pi / kSamples;
    const double x = cx + r * std::cos(a);
    const double y = cy + r * std::sin(a);
    if (x >= x0 && x < x1 && y >= y0 && y < y1) ++inside;
  }
  return static_cast<double>(inside) / kSamples;
}

void add_trunk(const Tree& tree, const Grid& g, Accumulator& acc) {
  const double r = 0.5 * tree.trunk_diameter;
  const double top = std::min(tree.trunk_length, tree.height);
  if (r <= 0.0 || top <= 0.0) return;
  const double xmax = g.px * g.dims.w;
  const double ymax = g.py * g.dims.h;
  if (tree.x + r <= 0.0 || tree.y + r <= 0.0 || tree.x - r >= xmax || tree.y - r >= ymax) return;

  const int x0 = g.cell(tree.x - r, g.px, g.dims.w), x1 = g.cell(tree.x + r, g.px, g.dims.w);
  const int y0 = g.cell(tree.y - r, g.py, g.dims.h), y1 = g.cell(tree.y + r, g.py, g.dims.h);
  const int z1 = g.cell(top, g.pz, g.dims.d);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double rx0 = x * g.px, rx1 = (x + 1) * g.px;
      const double ry0 = y * g.py, ry1 = (y + 1) * g.py;
      const double dx = tree.x - std::clamp(tree.x, rx0, rx1);
      const double dy = tree.y - std::clamp(tree.y, ry0, ry1);
      if (dx * dx + dy * dy >= r * r) continue;
      const double perimeter = 2.0 * std::numbers::pi * r * arc_fraction_in_rect(tree.x, tree.y, r, rx0, ry0, rx1, ry1);
      // Columns inside the trunk cross-section carry its cut face instead.
      const double lateral = perimeter > 0.0 ? perimeter : g.px * g.py / g.pz;
      for (int z = 0; z <= z1; ++z) {
        const double dz = std::min(top, (z + 1) * g.pz) - z * g.pz;
        if (dz <= 0.0) continue;
        acc.add(g.dims.index(x, y, z), lateral * dz, tree.trunk_reflectance);
      }
    }
  }
}

}  // namespace

GroundTruthVolume voxelize(const ForestScene& scene, Dims3 dims, double z_top) {
  require_input(dims.w >= 4 && dims.h >= 4 && dims.d >= 4, "voxelize needs dims >= (4,4,4), got " + to_string(dims));
  require_input(z_top > 0.0, "z_top must be positive");
  require_input(scene.plot_side > 0.0, "scene plot_side must be positive");

  GroundTruthVolume vol;
  vol.dims = dims;
  vol.extent_xy = scene.plot_side;
  vol.z_top = z_top;
  const Grid g{dims, vol.pitch_x(), vol.pitch_y(), vol.pitch_z()};
  Accumulator acc(dims.count());

  for (int y = 0; y < dims.h; ++y) {
    for (int x = 0; x < dims.w; ++x) {
      const double r = scene.ground.mean_over(x * g.px, y * g.py, (x + 1) * g.px, (y + 1) * g.py);
      acc.add(dims.index(x, y, 0), g.px * g.py, r);
    }
  }
  for (const auto& tree : scene.trees) {
    add_trunk(tree, g, acc);
    for (const auto& leaf : tree.leaves) add_leaf(leaf, g, acc);
  }

  vol.reflectance.assign(dims.count(), GroundTruthVolume::kUnoccupied);
  vol.occupied.assign(dims.count(), 0);
  for (std::size_t i = 0; i < dims.count(); ++i) {
    if (acc.weight[i] > 0.0) {
      vol.occupied[i] = 1;
      vol.reflectance[i] = static_cast<float>(std::clamp(acc.weighted[i] / acc.weight[i], 0.0, 1.0));
    }
  }
  return vol;
}

DepthMap extract_top_layer(const GroundTruthVolume& volume) {
  DepthMap map(volume.dims.w, volume.dims.h, 0);
  for (int y = 0; y < volume.dims.h; ++y) {
    for (int x = 0; x < volume.dims.w; ++x) {
      for (int z = volume.dims.d - 1; z >= 0; --z) {
        if (volume.is_occupied(x, y, z)) {
          map.at(x, y) = z;
          break;
        }
      }
    }
  }
  return map;
}

}  // namespace understory
