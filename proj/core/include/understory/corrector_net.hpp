#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "understory/grid.hpp"

namespace understory {

/// Architecture of a per-layer corrector: eight 3x3x3 convolution stages
/// (stride 1, zero padding 1, GELU) followed by fully connected layers
/// flatten -> hidden... -> 1, GELU on every hidden layer.
struct NetConfig {
  PatchDims input;
  std::vector<int> channels = full_channels();
  std::vector<int> hidden = {128, 64};

  static std::vector<int> full_channels() { return {32, 32, 64, 64, 128, 128, 256, 256}; }
  static std::vector<int> desk_channels() { return {4, 4, 8, 8, 16, 16, 32, 32}; }

  void validate() const;
  std::uint64_t param_count() const;
  /// Length of the flattened conv output, channels.back() * w * h * d.
  std::uint64_t flatten_size() const;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Parameter count of the full-width network for a (w, h, d) patch.
std::uint64_t param_count(int pw, int ph, int pd);

/// Exact GELU, x * Phi(x) with the standard normal CDF from erfc.
double gelu(double x);
double gelu_grad(double x);

/// Location of one weight or bias tensor inside the flat parameter vector.
struct ParamBlock {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;  // 1 for biases

  std::size_t size() const { return rows * cols; }
};

/// Flat parameter layout in serialization order: for every conv stage its
/// kernel [c_out][c_in][3][3][3] then bias, then every dense layer's weight
/// [out][in] then bias.
struct ParamLayout {
  std::vector<ParamBlock> conv_weight;
  std::vector<ParamBlock> conv_bias;
  std::vector<ParamBlock> dense_weight;
  std::vector<ParamBlock> dense_bias;
  std::size_t total = 0;

  static ParamLayout of(const NetConfig& config);
};

/// Trained (or fallback) corrector for one stack layer.
template <typename T>
struct LayerModel {
  NetConfig config;
  std::vector<T> params;
  /// Pass-through fallback for layers without trainable data: predicts the
  /// apex value, which is the first tensor element.
  bool identity = false;
  std::string id;

  static LayerModel zeros(const NetConfig& config);
  /// He-normal kernels from the seeded generator, zero biases; the output
  /// bias starts at `output_bias`.
  static LayerModel initialized(const NetConfig& config, std::uint64_t seed, T output_bias = T(0));
  static LayerModel identity_fallback(const NetConfig& config);

  ParamLayout layout() const { return ParamLayout::of(config); }
};

template <typename T>
LayerModel<T> convert(const LayerModel<float>& model);

/// Batched forward pass; `inputs` holds batch * input.count() values,
/// [sample][d][h][w]. Returns one prediction per sample (unclamped).
template <typename T>
std::vector<T> forward(const LayerModel<T>& model, std::span<const T> inputs);

/// Mean squared error over the batch and its gradient with respect to every
/// parameter (same layout as model.params).
template <typename T>
struct LossGradient {
  T loss = T(0);
  std::vector<T> grad;
};

/// The batch is processed in fixed chunks of `chunk` samples whose partial
/// gradients are summed in chunk order, so the result does not depend on
/// `workers`.
template <typename T>
LossGradient<T> backward(const LayerModel<T>& model, std::span<const T> inputs, std::span<const T> targets,
                         int workers = 1, std::size_t chunk = 64);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct TrainState {
  AdamConfig adam;
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t step = 0;

  static TrainState for_model(const LayerModel<T>& model, const AdamConfig& adam);
};

/// One bias-corrected Adam update in place.
template <typename T>
void adam_step(TrainState<T>& state, LayerModel<T>& model, std::span<const T> grad);

}  // namespace understory
