#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "understory/aperture.hpp"
#include "understory/grid.hpp"

namespace understory {

/// Receptive field of one focal-stack point: the pyramid between the apex
/// (x, y, f) and the aperture square, cut at every stack layer at or above f.
struct Frustum {
  Eigen::Vector3d apex = Eigen::Vector3d::Zero();
  ApertureSquare aperture;
  int first_layer = 0;         // stack layer of the apex
  std::vector<Rect> sections;  // sections[i] lies on layer first_layer + i

  int layer_count() const { return static_cast<int>(sections.size()); }
  Rect section_at(double z) const { return aperture.frustum_section(apex.x(), apex.y(), apex.z(), z); }
};

Frustum receptive_frustum(const Eigen::Vector3d& apex, const ApertureSquare& aperture, const StackGeometry& geometry);

/// Convenience: frustum of stack cell (x, y) on layer `layer`.
Frustum receptive_frustum(const StackGeometry& geometry, int x, int y, int layer, const ApertureSquare& aperture);

/// Stack layers feeding a patch: `depth` indices spread uniformly from the
/// apex layer to the top layer, nearest neighbour with ties towards the apex.
std::vector<int> axial_layers(int apex_layer, int layer_count, int depth);

/// Downsampled patch tensor, laid out [d][h][w] with d = 0 the apex layer.
/// Lateral cells are area-weighted means of the valid stack cells under each
/// sub-rectangle; empty sub-rectangles take the mean of their layer.
std::vector<float> sample_patch(const FocalStack& stack, const Frustum& frustum, const PatchDims& dims);

/// Writes into a caller buffer of dims.count() floats.
void sample_patch_into(const FocalStack& stack, const Frustum& frustum, const PatchDims& dims, std::span<float> out);

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

/// Patches of one stack layer, pooled over plots, stored flat.
struct PatchDataset {
  PatchDims dims;
  int layer = 0;
  std::vector<float> inputs;          // size() * dims.count()
  std::vector<float> targets;         // NaN where void
  std::vector<std::uint8_t> is_void;
  std::vector<Split> split;
  std::vector<std::uint32_t> plot;
  std::vector<std::uint16_t> x;
  std::vector<std::uint16_t> y;

  std::size_t size() const { return targets.size(); }
  std::span<const float> input(std::size_t i) const { return {inputs.data() + i * dims.count(), dims.count()}; }
  std::size_t count(Split s) const;
  std::size_t void_count() const;
  void append(std::span<const float> tensor, float target, bool void_target, Split s, std::uint32_t plot_id,
              int px, int py);
};

/// One simulated plot: its focal stack, ground truth and aperture.
struct PlotData {
  const FocalStack* stack = nullptr;
  const GroundTruthVolume* truth = nullptr;
  ApertureSquare aperture;
};

struct DatasetOptions {
  PatchDims dims;
  bool include_void = false;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t split_seed = 0;
  int workers = 1;
};

/// One patch per lateral cell of `layer` per plot, ordered by (plot, y, x).
/// Splits are assigned per plot by a seeded shuffle over all cells before void
/// filtering, so the void-filtered and void-inclusive variants agree on the
/// split of every non-void patch.
PatchDataset build_dataset(std::span<const PlotData> plots, int layer, const DatasetOptions& options);

}  // namespace understory
