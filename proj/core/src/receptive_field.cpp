#include "understory/receptive_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "understory/error.hpp"
#include "understory/rng.hpp"

namespace understory {
namespace {

constexpr double kHeightTol = 1e-9;

struct Moments {
  double sum = 0.0;
  double weight = 0.0;
};

// Area-weighted sum of valid cells of `layer` overlapping `r`. A rectangle of
// zero area picks the valid cell containing its centre.
Moments rect_moments(const FocalStack& stack, int layer, const Rect& r) {
  const StackGeometry& g = stack.geometry;
  const double cw = g.cell_width();
  const double ch = g.cell_height();
  Moments m;
  if (r.width() <= 0.0 || r.height() <= 0.0) {
    const double cx = 0.5 * (r.x0 + r.x1);
    const double cy = 0.5 * (r.y0 + r.y1);
    if (cx < 0.0 || cy < 0.0 || cx > g.extent || cy > g.extent) return m;
    const int i = std::min(static_cast<int>(cx / cw), g.dims.w - 1);
    const int j = std::min(static_cast<int>(cy / ch), g.dims.h - 1);
    if (stack.is_valid(i, j, layer)) {
      m.sum = stack.at(i, j, layer);
      m.weight = 1.0;
    }
    return m;
  }
  const double x0 = std::max(0.0, r.x0), x1 = std::min(g.extent, r.x1);
  const double y0 = std::max(0.0, r.y0), y1 = std::min(g.extent, r.y1);
  if (x0 >= x1 || y0 >= y1) return m;
  const int i0 = std::clamp(static_cast<int>(std::floor(x0 / cw)), 0, g.dims.w - 1);
  const int i1 = std::clamp(static_cast<int>(std::ceil(x1 / cw)) - 1, 0, g.dims.w - 1);
  const int j0 = std::clamp(static_cast<int>(std::floor(y0 / ch)), 0, g.dims.h - 1);
  const int j1 = std::clamp(static_cast<int>(std::ceil(y1 / ch)) - 1, 0, g.dims.h - 1);
  for (int j = j0; j <= j1; ++j) {
    const double oy = std::min(y1, (j + 1) * ch) - std::max(y0, j * ch);
    if (oy <= 0.0) continue;
    const std::size_t row = g.dims.index(0, j, layer);
    for (int i = i0; i <= i1; ++i) {
      if (!stack.valid[row + static_cast<std::size_t>(i)]) continue;
      const double ox = std::min(x1, (i + 1) * cw) - std::max(x0, i * cw);
      if (ox <= 0.0) continue;
      const double w = ox * oy;
      m.sum += w * stack.values[row + static_cast<std::size_t>(i)];
      m.weight += w;
    }
  }
  return m;
}

}  // namespace

Frustum receptive_frustum(const Eigen::Vector3d& apex, const ApertureSquare& aperture, const StackGeometry& geometry) {
  geometry.validate();
  require_input(geometry.plot_aligned(), "receptive fields need a plot-aligned square stack");
  require_input(apex.z() < aperture.altitude, "apex must lie below the aperture altitude");
  require_input(apex.x() >= 0.0 && apex.y() >= 0.0 && apex.x() <= geometry.extent && apex.y() <= geometry.extent,
                "apex lies outside the stack");
  Frustum f;
  f.apex = apex;
  f.aperture = aperture;
  const auto& hs = geometry.heights;
  const auto it = std::lower_bound(hs.begin(), hs.end(), apex.z() - kHeightTol);
  require_input(it != hs.end(), "apex lies above the top stack layer");
  f.first_layer = static_cast<int>(it - hs.begin());
  for (auto k = it; k != hs.end(); ++k) {
    // The apex layer itself collapses to the apex point.
    const double z = (k == it) ? apex.z() : *k;
    f.sections.push_back(aperture.frustum_section(apex.x(), apex.y(), apex.z(), z));
  }
  return f;
}

Frustum receptive_frustum(const StackGeometry& geometry, int x, int y, int layer, const ApertureSquare& aperture) {
  require_input(geometry.dims.contains(x, y, layer), "stack cell out of range");
  return receptive_frustum(
      Eigen::Vector3d(geometry.center_x(x), geometry.center_y(y), geometry.heights[static_cast<std::size_t>(layer)]),
      aperture, geometry);
}

std::vector<int> axial_layers(int apex_layer, int layer_count, int depth) {
  require_input(depth >= 1, "patch depth must be positive");
  require_input(apex_layer >= 0 && apex_layer < layer_count, "apex layer out of range");
  std::vector<int> out(static_cast<std::size_t>(depth), apex_layer);
  if (depth == 1) return out;
  const long span = layer_count - 1 - apex_layer;
  const long den = depth - 1;
  for (long j = 0; j < depth; ++j) {
    const long num = j * span;
    long q = num / den;
    const long r = num % den;
    if (2 * r > den) ++q;  // exact halves stay on the apex side
    out[static_cast<std::size_t>(j)] = apex_layer + static_cast<int>(q);
  }
  return out;
}

void sample_patch_into(const FocalStack& stack, const Frustum& frustum, const PatchDims& dims, std::span<float> out) {
  require_input(dims.w >= 1 && dims.h >= 1 && dims.d >= 1, "patch dims must be positive");
  require_input(out.size() == dims.count(), "patch buffer has the wrong size");
  const StackGeometry& g = stack.geometry;
  require_input(frustum.first_layer + frustum.layer_count() == g.dims.d, "frustum does not match the stack");
  require_input(frustum.apex.x() >= 0.0 && frustum.apex.y() >= 0.0 && frustum.apex.x() <= g.extent &&
                    frustum.apex.y() <= g.extent,
                "frustum lies outside the stack");

  const Moments apex_m = rect_moments(stack, frustum.first_layer, frustum.sections.front());
  const double apex_value = apex_m.weight > 0.0 ? apex_m.sum / apex_m.weight : 0.0;
  const auto layers = axial_layers(frustum.first_layer, g.dims.d, dims.d);

  for (int d = 0; d < dims.d; ++d) {
    const int layer = layers[static_cast<std::size_t>(d)];
    const Rect& r = frustum.sections[static_cast<std::size_t>(layer - frustum.first_layer)];
    const Moments lm = rect_moments(stack, layer, r);
    const double layer_mean = lm.weight > 0.0 ? lm.sum / lm.weight : apex_value;
    const double sw = r.width() / dims.w;
    const double sh = r.height() / dims.h;
    for (int v = 0; v < dims.h; ++v) {
      for (int u = 0; u < dims.w; ++u) {
        const Rect sub{r.x0 + u * sw, r.y0 + v * sh, r.x0 + (u + 1) * sw, r.y0 + (v + 1) * sh};
        const Moments m = rect_moments(stack, layer, sub);
        const double value = m.weight > 0.0 ? m.sum / m.weight : layer_mean;
        out[(static_cast<std::size_t>(d) * dims.h + v) * dims.w + u] = static_cast<float>(value);
      }
    }
  }
}

std::vector<float> sample_patch(const FocalStack& stack, const Frustum& frustum, const PatchDims& dims) {
  std::vector<float> out(dims.count());
  sample_patch_into(stack, frustum, dims, out);
  return out;
}

std::size_t PatchDataset::count(Split s) const { return static_cast<std::size_t>(std::count(split.begin(), split.end(), s)); }

std::size_t PatchDataset::void_count() const {
  return static_cast<std::size_t>(std::count(is_void.begin(), is_void.end(), std::uint8_t{1}));
}

void PatchDataset::append(std::span<const float> tensor, float target, bool void_target, Split s,
                          std::uint32_t plot_id, int px, int py) {
  inputs.insert(inputs.end(), tensor.begin(), tensor.end());
  targets.push_back(void_target ? std::numeric_limits<float>::quiet_NaN() : target);
  is_void.push_back(void_target ? 1 : 0);
  split.push_back(s);
  plot.push_back(plot_id);
  x.push_back(static_cast<std::uint16_t>(px));
  y.push_back(static_cast<std::uint16_t>(py));
}

PatchDataset build_dataset(std::span<const PlotData> plots, int layer, const DatasetOptions& options) {
  require_input(!plots.empty(), "dataset needs at least one plot");
  require_input(options.val_fraction >= 0.0 && options.test_fraction >= 0.0 &&
                    options.val_fraction + options.test_fraction < 1.0,
                "split fractions must be non-negative and leave room for training");
  const PatchDims& pd = options.dims;
  require_input(pd.w >= 1 && pd.h >= 1 && pd.d >= 1, "patch dims must be positive");

  PatchDataset ds;
  ds.dims = pd;
  ds.layer = layer;
  for (std::size_t p = 0; p < plots.size(); ++p) {
    const FocalStack& stack = *plots[p].stack;
    const GroundTruthVolume& truth = *plots[p].truth;
    const Dims3& d = stack.geometry.dims;
    require_input(d == truth.dims, "stack " + to_string(d) + " and truth " + to_string(truth.dims) + " differ");
    require_input(std::abs(stack.geometry.extent - truth.extent_xy) < 1e-9, "stack and truth extents differ");
    require_input(layer >= 0 && layer < d.d, "layer index out of range");

    // Split assignment over every lateral cell, independent of voids.
    const std::size_t n = d.layer_count();
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    Rng rng(derive_seed(options.split_seed, p));
    rng.shuffle(order);
    const auto n_val = static_cast<std::size_t>(std::llround(options.val_fraction * n));
    const auto n_test = static_cast<std::size_t>(std::llround(options.test_fraction * n));
    std::vector<Split> cell_split(n, Split::Train);
    for (std::size_t k = 0; k < n_val && k < n; ++k) cell_split[order[k]] = Split::Val;
    for (std::size_t k = n_val; k < n_val + n_test && k < n; ++k) cell_split[order[k]] = Split::Test;

    std::vector<std::uint32_t> cells;
    cells.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int cx = static_cast<int>(i % d.w);
      const int cy = static_cast<int>(i / d.w);
      if (options.include_void || truth.is_occupied(cx, cy, layer)) cells.push_back(static_cast<std::uint32_t>(i));
    }

    std::vector<float> tensors(cells.size() * pd.count());
    auto work = [&](std::size_t begin, std::size_t stride) {
      for (std::size_t k = begin; k < cells.size(); k += stride) {
        const int cx = static_cast<int>(cells[k] % d.w);
        const int cy = static_cast<int>(cells[k] / d.w);
        const Frustum fr = receptive_frustum(stack.geometry, cx, cy, layer, plots[p].aperture);
        sample_patch_into(stack, fr, pd, std::span<float>(tensors.data() + k * pd.count(), pd.count()));
      }
    };
    const int workers = std::max(1, options.workers);
    if (workers == 1) {
      work(0, 1);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(work, static_cast<std::size_t>(w), static_cast<std::size_t>(workers));
      for (auto& t : pool) t.join();
    }

    for (std::size_t k = 0; k < cells.size(); ++k) {
      const int cx = static_cast<int>(cells[k] % d.w);
      const int cy = static_cast<int>(cells[k] / d.w);
      const bool is_void = !truth.is_occupied(cx, cy, layer);
      ds.append(std::span<const float>(tensors.data() + k * pd.count(), pd.count()), is_void ? 0.0f : truth.at(cx, cy, layer),
                is_void, cell_split[cells[k]], static_cast<std::uint32_t>(p), cx, cy);
    }
  }
  return ds;
}

}  // namespace understory
