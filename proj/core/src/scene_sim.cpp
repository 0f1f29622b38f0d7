#include "understory/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "understory/rng.hpp"

namespace understory {
namespace {

void check_range(const Range& r, const char* name, double floor = 0.0) {
  require_input(r.valid(), std::string(name) + " range has min > max");
  require_input(r.min >= floor, std::string(name) + " range must not be negative");
}

void check_unit_range(const Range& r, const char* name) {
  check_range(r, name);
  require_input(r.max <= 1.0, std::string(name) + " must lie in [0, 1]");
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

GroundTexture make_ground(const ForestSpec& spec, Rng& rng) {
  GroundTexture g;
  g.texel = spec.ground_texel;
  g.nx = std::max(1, static_cast<int>(std::ceil(spec.plot_side / spec.ground_texel - 1e-9)));
  g.ny = g.nx;
  g.values.resize(static_cast<std::size_t>(g.nx) * g.ny);

  // Two octaves of value noise on square lattices.
  struct Octave {
    int n;
    double spacing;
    double amplitude;
    std::vector<double> lattice;
  };
  std::vector<Octave> octaves;
  for (const auto& [scale, amp] : {std::pair{1.0, 0.65}, std::pair{0.5, 0.35}}) {
    Octave o;
    o.spacing = spec.ground_feature_size * scale;
    o.n = static_cast<int>(std::ceil(spec.plot_side / o.spacing)) + 2;
    o.amplitude = amp;
    o.lattice.resize(static_cast<std::size_t>(o.n) * o.n);
    for (auto& v : o.lattice) v = rng.uniform();
    octaves.push_back(std::move(o));
  }

  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const double x = (i + 0.5) * g.texel;
      const double y = (j + 0.5) * g.texel;
      double n = 0.0;
      for (const auto& o : octaves) {
        const double gx = x / o.spacing;
        const double gy = y / o.spacing;
        const int ix = static_cast<int>(gx);
        const int iy = static_cast<int>(gy);
        const double tx = smoothstep(gx - ix);
        const double ty = smoothstep(gy - iy);
        auto L = [&](int a, int b) { return o.lattice[static_cast<std::size_t>(b) * o.n + a]; };
        const double top = L(ix, iy) + tx * (L(ix + 1, iy) - L(ix, iy));
        const double bot = L(ix, iy + 1) + tx * (L(ix + 1, iy + 1) - L(ix, iy + 1));
        n += o.amplitude * (top + ty * (bot - top));
      }
      const auto& r = spec.ground_reflectance;
      g.values[static_cast<std::size_t>(j) * g.nx + i] = static_cast<float>(r.min + (r.max - r.min) * n);
    }
  }
  return g;
}

Eigen::Vector3d random_unit(Rng& rng) {
  // Marsaglia: uniform on the sphere.
  for (;;) {
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    const double s = a * a + b * b;
    if (s >= 1.0 || s == 0.0) continue;
    const double k = 2.0 * std::sqrt(1.0 - s);
    return {a * k, b * k, 1.0 - 2.0 * s};
  }
}

void grow_crown(const ForestSpec& spec, Tree& tree, double crown_bottom, Rng& rng) {
  const double half_height = 0.5 * (tree.height - crown_bottom);
  const double r = tree.crown_radius;
  const double inner = spec.crown_shell_inner;
  const double shell_volume = 4.0 / 3.0 * std::numbers::pi * r * r * half_height * (1.0 - inner * inner * inner);
  const auto n = static_cast<std::size_t>(std::llround(spec.leaves_per_m3 * shell_volume));
  const Eigen::Vector3d c(tree.x, tree.y, crown_bottom + half_height);

  tree.leaves.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Eigen::Vector3d p;
    for (;;) {
      p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      const double rho = p.norm();
      if (rho <= 1.0 && rho >= inner) break;
    }
    LeafQuad leaf;
    leaf.center = c + Eigen::Vector3d(p.x() * r, p.y() * r, p.z() * half_height);
    const Eigen::Vector3d normal = random_unit(rng);
    const Eigen::Vector3d helper = std::abs(normal.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    const Eigen::Vector3d u = normal.cross(helper).normalized();
    const Eigen::Vector3d v = normal.cross(u);
    const double half = 0.5 * rng.uniform(spec.leaf_size.min, spec.leaf_size.max);
    leaf.half_u = u * half;
    leaf.half_v = v * half;
    leaf.reflectance = rng.uniform(spec.leaf_reflectance.min, spec.leaf_reflectance.max);
    tree.leaves.push_back(leaf);
  }
}

}  // namespace

void ForestSpec::validate() const {
  require_input(plot_side > 0.0, "plot_side must be positive");
  require_input(density > 0.0, "density must be positive");
  require_input(tree_count() >= 1, "density yields no tree on this plot (round(density * area) == 0)");
  check_range(height, "height");
  require_input(height.min > 0.0, "tree height must be positive");
  check_range(trunk_length, "trunk_length");
  check_range(trunk_diameter, "trunk_diameter");
  check_range(leaf_size, "leaf_size");
  check_range(crown_radius, "crown_radius");
  require_input(leaves_per_m3 >= 0.0, "leaves_per_m3 must not be negative");
  require_input(crown_shell_inner >= 0.0 && crown_shell_inner < 1.0, "crown_shell_inner must lie in [0, 1)");
  check_unit_range(leaf_reflectance, "leaf_reflectance");
  check_unit_range(trunk_reflectance, "trunk_reflectance");
  check_unit_range(ground_reflectance, "ground_reflectance");
  require_input(ground_texel > 0.0 && ground_feature_size > 0.0, "ground texture scales must be positive");
}

int ForestSpec::tree_count() const {
  return static_cast<int>(std::llround(density * plot_side * plot_side / 10000.0));
}

std::array<Eigen::Vector3d, 4> LeafQuad::corners() const {
  return {center - half_u - half_v, center + half_u - half_v, center + half_u + half_v, center - half_u + half_v};
}

GroundTexture GroundTexture::constant(double plot_side, double texel, float value) {
  GroundTexture g;
  g.texel = texel;
  g.nx = std::max(1, static_cast<int>(std::ceil(plot_side / texel - 1e-9)));
  g.ny = g.nx;
  g.values.assign(static_cast<std::size_t>(g.nx) * g.ny, value);
  return g;
}

double GroundTexture::mean_over(double x0, double y0, double x1, double y1) const {
  const int i0 = std::clamp(static_cast<int>(std::floor(x0 / texel)), 0, nx - 1);
  const int i1 = std::clamp(static_cast<int>(std::ceil(x1 / texel)) - 1, 0, nx - 1);
  const int j0 = std::clamp(static_cast<int>(std::floor(y0 / texel)), 0, ny - 1);
  const int j1 = std::clamp(static_cast<int>(std::ceil(y1 / texel)) - 1, 0, ny - 1);
  double sum = 0.0;
  double area = 0.0;
  for (int j = j0; j <= j1; ++j) {
    const double oy = std::min(y1, (j + 1) * texel) - std::max(y0, j * texel);
    if (oy <= 0.0) continue;
    for (int i = i0; i <= i1; ++i) {
      const double ox = std::min(x1, (i + 1) * texel) - std::max(x0, i * texel);
      if (ox <= 0.0) continue;
      sum += ox * oy * at(i, j);
      area += ox * oy;
    }
  }
  // Rectangles beyond the raster edge fall back to the nearest texel.
  return area > 0.0 ? sum / area : at(i0, j0);
}

std::size_t ForestScene::leaf_count() const {
  std::size_t n = 0;
  for (const auto& t : trees) n += t.leaves.size();
  return n;
}

ForestScene generate_forest(const ForestSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  ForestScene scene;
  scene.plot_side = spec.plot_side;
  scene.ground = make_ground(spec, rng);

  const int n = spec.tree_count();
  scene.trees.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    // Each tree draws from its own stream so that adding trees (higher
    // density, same seed) leaves the earlier ones untouched.
    Rng tr(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    Tree t;
    t.x = tr.uniform(0.0, spec.plot_side);
    t.y = tr.uniform(0.0, spec.plot_side);
    t.height = tr.uniform(spec.height.min, spec.height.max);
    t.trunk_length = tr.uniform(spec.trunk_length.min, spec.trunk_length.max);
    t.trunk_diameter = tr.uniform(spec.trunk_diameter.min, spec.trunk_diameter.max);
    t.crown_radius = tr.uniform(spec.crown_radius.min, spec.crown_radius.max);
    t.trunk_reflectance = tr.uniform(spec.trunk_reflectance.min, spec.trunk_reflectance.max);
    // Short trees keep at least a one-metre crown on top of the trunk.
    const double crown_bottom = std::min(t.trunk_length, std::max(0.0, t.height - 1.0));
    grow_crown(spec, t, crown_bottom, tr);
    scene.trees.push_back(std::move(t));
  }
  return scene;
}

}  // namespace understory
