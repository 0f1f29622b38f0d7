#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "understory/aperture.hpp"
#include "understory/corrector_net.hpp"
#include "understory/receptive_field.hpp"
#include "understory/scene_sim.hpp"
#include "understory/training.hpp"

namespace understory {

/// Everything needed to simulate, train and evaluate one configuration.
struct PipelineConfig {
  ForestSpec forest;
  Dims3 dims{64, 64, 32};
  double z_top = 20.0;
  double aperture_side = 24.0;
  double pose_spacing = 6.0;
  double altitude = 35.0;
  CameraIntrinsics camera{256, 50.0};
  NetConfig net;
  DatasetOptions dataset;
  TrainOptions train;
  /// Replace a trained layer model by the identity unless its paired gain
  /// over the uncorrected apex value on the validation split is at least
  /// `selection_z` standard errors above zero.
  bool identity_if_worse = true;
  double selection_z = 2.0;
  int workers = 1;

  /// 64x64x32 volume over 30 x 30 x 20 m, 5x5 poses, 2x2x8 patches and the
  /// narrow channel schedule.
  static PipelineConfig desk();
  /// 440^3 volume, 9x9 poses, 2x2x20 patches, full channel schedule.
  static PipelineConfig paper_scale();

  ApertureSquare aperture() const;
  void validate() const;
};

/// One simulated plot with its capture and uncorrected focal stack.
struct SimulatedPlot {
  double density = 0.0;
  std::uint64_t seed = 0;
  ForestScene scene;
  GroundTruthVolume truth;
  ApertureScan scan;
  FocalStack stack;
};

SimulatedPlot simulate_plot(const PipelineConfig& config, double density, std::uint64_t seed);

/// Training outcome of one stack layer.
struct LayerResult {
  LayerModel<float> model;
  std::vector<EpochRecord> history;
  std::size_t train_patches = 0;
  std::size_t void_patches = 0;
  double val_mse = 0.0;           // of the kept model, non-void validation patches
  double val_identity_mse = 0.0;  // uncorrected apex value on the same patches
  double gain_z = 0.0;            // paired validation gain of the trained model, in standard errors
  bool fallback = false;          // identity model kept
  std::string fallback_reason;
};

/// Model selection against the uncorrected apex value. With
/// identity_if_worse, a trained model is kept only when validation patches
/// exist and its paired gain reaches `min_z` standard errors.
struct SelectionOptions {
  bool identity_if_worse = true;
  double min_z = 2.0;
};

/// Trains one corrector per stack layer on void-filtered patches pooled over
/// the plots. Layers without non-void training patches get an identity
/// fallback model.
std::vector<LayerResult> train_all_layers(std::span<const PlotData> plots, const NetConfig& net,
                                          const DatasetOptions& dataset, const TrainOptions& train,
                                          const SelectionOptions& selection = {}, std::ostream* log = nullptr);

std::vector<LayerModel<float>> models_of(const std::vector<LayerResult>& results);

/// Applies the layer models to every stack point and clamps to [0, 1].
ReflectanceStack correct_stack(const FocalStack& stack, std::span<const LayerModel<float>> models,
                               const ApertureSquare& aperture, int workers = 1);

struct LayerEval {
  int layer = 0;
  int depth_below_canopy = 0;  // canopy top layer minus this layer
  std::size_t occupied = 0;
  double uncorrected_mse = 0.0;
  double corrected_mse = 0.0;

  double uncorrected_rmse_pct() const;
  double corrected_rmse_pct() const;
  /// uncorrected / corrected MSE; infinity when the corrected MSE is zero.
  double improvement() const;
};

struct EvalReport {
  double density = 0.0;
  int canopy_top_layer = -1;  // highest layer with an occupied voxel above the ground layer
  std::vector<LayerEval> layers;

  /// Layers 0 .. canopy_top_layer that hold at least one occupied voxel.
  std::vector<const LayerEval*> below_canopy() const;
  /// Deepest quarter (at least one) of the below-canopy layers.
  std::vector<const LayerEval*> deepest_quartile() const;
  /// Mean uncorrected over mean corrected MSE across the deepest quartile.
  double deepest_quartile_improvement() const;
  /// Fraction of below-canopy layers whose corrected MSE does not exceed the uncorrected one.
  double fraction_not_worse() const;
  /// Spearman rank correlation of depth below canopy and uncorrected MSE.
  double depth_mse_spearman() const;
};

/// MSE over occupied voxels, per layer.
std::vector<double> layer_mse(std::span<const float> values, const GroundTruthVolume& truth);

double rmse_pct(double mse);

/// Per-layer report. `corrected` may be empty, in which case the corrected
/// columns repeat the uncorrected ones.
EvalReport evaluate(const FocalStack& stack, const ReflectanceStack* corrected, const GroundTruthVolume& truth,
                    double density = 0.0);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

void write_eval_csv(std::ostream& out, const EvalReport& report);

struct SweepOptions {
  std::vector<double> densities;
  std::vector<std::uint64_t> seeds;
  int train_plots = 3;
  /// Train and correct; otherwise only uncorrected errors are reported.
  bool correct = true;
};

struct SweepRow {
  double density = 0.0;
  std::uint64_t seed = 0;
  LayerEval eval;
};

/// For each density and seed: simulate training plots and a held-out plot,
/// optionally train and correct, and evaluate the held-out plot.
std::vector<SweepRow> density_sweep(const PipelineConfig& config, const SweepOptions& options,
                                    std::ostream* log = nullptr);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

/// Plot seeds used by a sweep cell: training plots first, held-out plot last.
std::vector<std::uint64_t> sweep_plot_seeds(std::uint64_t seed, int train_plots);

}  // namespace understory
