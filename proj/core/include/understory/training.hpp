#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "understory/corrector_net.hpp"
#include "understory/receptive_field.hpp"

namespace understory {

struct TrainOptions {
  AdamConfig adam;
  std::size_t batch_size = 256;
  int epochs = 20;
  std::uint64_t seed = 0;
  int workers = 1;
  std::size_t chunk = 64;
  /// Cap on training patches per fit (0 = all), taken from a seeded shuffle.
  std::size_t max_train_patches = 0;
  /// Stop after this many epochs without validation improvement (0 = never).
  int patience = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct FitResult {
  LayerModel<float> model;  // weights of the best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_mse = 0.0;
};

/// Mini-batch Adam on the training split. Void targets (present only in
/// void-inclusive datasets) are trained as zero reflectance; validation MSE
/// is measured on non-void validation patches only, or on the training split
/// when no such patch exists.
FitResult fit(LayerModel<float> model, const PatchDataset& dataset, const TrainOptions& options);

/// Seeds a fresh network (output bias at the mean training target) and fits it.
FitResult fit_new(const NetConfig& config, const PatchDataset& dataset, const TrainOptions& options);

/// MSE of `model` over the non-void patches of one split.
double split_mse(const LayerModel<float>& model, const PatchDataset& dataset, Split split);

/// MSE of the uncorrected apex value over the non-void patches of one split.
double split_identity_mse(const PatchDataset& dataset, Split split);

/// Paired per-patch gain of `model` over the uncorrected apex value,
/// d = e_identity^2 - e_model^2, on the non-void patches of one split.
struct GainTest {
  std::size_t n = 0;
  double mean_gain = 0.0;
  double std_error = 0.0;
  /// mean_gain / std_error; +inf for a noiseless positive gain, 0 when empty.
  double z() const {
    if (n == 0) return 0.0;
    if (std_error > 0.0) return mean_gain / std_error;
    return mean_gain > 0.0 ? std::numeric_limits<double>::infinity() : (mean_gain < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0);
  }
};

GainTest gain_over_identity(const LayerModel<float>& model, const PatchDataset& dataset, Split split);

/// `epoch,train_mse,val_mse` rows with a header line.
void write_loss_csv(std::ostream& out, const std::vector<EpochRecord>& history);

}  // namespace understory
