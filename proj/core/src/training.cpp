#include "understory/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "understory/error.hpp"
#include "understory/rng.hpp"
#include "text_util.hpp"

namespace understory {
namespace {

std::vector<std::size_t> select(const PatchDataset& ds, Split s, bool non_void_only) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.split[i] == s && (!non_void_only || !ds.is_void[i])) idx.push_back(i);
  }
  return idx;
}

std::vector<double> predictions_over(const LayerModel<float>& model, const PatchDataset& ds,
                                     const std::vector<std::size_t>& idx) {
  const std::size_t P = ds.dims.count();
  constexpr std::size_t kBlock = 2048;
  std::vector<float> buf;
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t b0 = 0; b0 < idx.size(); b0 += kBlock) {
    const std::size_t n = std::min(kBlock, idx.size() - b0);
    buf.resize(n * P);
    for (std::size_t k = 0; k < n; ++k) {
      const auto in = ds.input(idx[b0 + k]);
      std::copy(in.begin(), in.end(), buf.begin() + static_cast<std::ptrdiff_t>(k * P));
    }
    const auto pred = forward<float>(model, buf);
    for (std::size_t k = 0; k < n; ++k) out.push_back(pred[k]);
  }
  return out;
}

double mse_over(const LayerModel<float>& model, const PatchDataset& ds, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto pred = predictions_over(model, ds, idx);
  double sse = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double e = pred[k] - ds.targets[idx[k]];
    sse += e * e;
  }
  return sse / static_cast<double>(idx.size());
}

}  // namespace

double split_mse(const LayerModel<float>& model, const PatchDataset& dataset, Split split) {
  return mse_over(model, dataset, select(dataset, split, true));
}

double split_identity_mse(const PatchDataset& dataset, Split split) {
  const auto idx = select(dataset, split, true);
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sse = 0.0;
  for (std::size_t i : idx) {
    const double e = static_cast<double>(dataset.input(i)[0]) - dataset.targets[i];
    sse += e * e;
  }
  return sse / static_cast<double>(idx.size());
}

GainTest gain_over_identity(const LayerModel<float>& model, const PatchDataset& dataset, Split split) {
  GainTest g;
  const auto idx = select(dataset, split, true);
  g.n = idx.size();
  if (idx.empty()) return g;
  const auto pred = predictions_over(model, dataset, idx);
  std::vector<double> d(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double t = dataset.targets[idx[k]];
    const double ei = static_cast<double>(dataset.input(idx[k])[0]) - t;
    const double em = pred[k] - t;
    d[k] = ei * ei - em * em;
  }
  double sum = 0.0;
  for (double v : d) sum += v;
  g.mean_gain = sum / static_cast<double>(d.size());
  if (d.size() > 1) {
    double ss = 0.0;
    for (double v : d) ss += (v - g.mean_gain) * (v - g.mean_gain);
    g.std_error = std::sqrt(ss / static_cast<double>(d.size() - 1) / static_cast<double>(d.size()));
  }
  return g;
}

FitResult fit(LayerModel<float> model, const PatchDataset& dataset, const TrainOptions& options) {
  require_input(options.batch_size >= 1 && options.epochs >= 1, "batch size and epochs must be positive");
  require_input(model.config.input == dataset.dims, "model input dims do not match the dataset");
  std::vector<std::size_t> train = select(dataset, Split::Train, false);
  require_input(!train.empty(), "training split is empty");
  if (options.max_train_patches > 0 && train.size() > options.max_train_patches) {
    Rng rng(derive_seed(options.seed, 0xC0FFEEull));
    rng.shuffle(train);
    train.resize(options.max_train_patches);
    std::sort(train.begin(), train.end());
  }
  std::vector<std::size_t> val = select(dataset, Split::Val, true);
  const bool val_on_train = val.empty();
  if (val_on_train) {
    for (std::size_t i : train) {
      if (!dataset.is_void[i]) val.push_back(i);
    }
  }

  const std::size_t P = dataset.dims.count();
  auto state = TrainState<float>::for_model(model, options.adam);
  FitResult result;
  result.best_val_mse = std::numeric_limits<double>::infinity();
  result.model = model;
  std::vector<float> xb, yb;
  int since_best = 0;

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order = train;
    rng.shuffle(order);
    double sse = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += options.batch_size) {
      const std::size_t n = std::min(options.batch_size, order.size() - b0);
      xb.resize(n * P);
      yb.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[b0 + k];
        const auto in = dataset.input(i);
        std::copy(in.begin(), in.end(), xb.begin() + static_cast<std::ptrdiff_t>(k * P));
        yb[k] = dataset.is_void[i] ? 0.0f : dataset.targets[i];
      }
      const auto lg = backward<float>(model, xb, yb, options.workers, options.chunk);
      if (!std::isfinite(lg.loss)) fail(ErrorKind::Numeric, "training loss is not finite");
      sse += static_cast<double>(lg.loss) * static_cast<double>(n);
      adam_step<float>(state, model, lg.grad);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = sse / static_cast<double>(order.size());
    rec.val_mse = mse_over(model, dataset, val);
    result.history.push_back(rec);
    if (rec.val_mse < result.best_val_mse) {
      result.best_val_mse = rec.val_mse;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (options.patience > 0 && ++since_best >= options.patience) {
      break;
    }
  }
  return result;
}

FitResult fit_new(const NetConfig& config, const PatchDataset& dataset, const TrainOptions& options) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.split[i] != Split::Train) continue;
    sum += dataset.is_void[i] ? 0.0 : dataset.targets[i];
    ++n;
  }
  const float bias = n > 0 ? static_cast<float>(sum / static_cast<double>(n)) : 0.0f;
  return fit(LayerModel<float>::initialized(config, derive_seed(options.seed, 0x1417ull), bias), dataset, options);
}

void write_loss_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,train_mse,val_mse\n";
  for (const auto& r : history) out << r.epoch << ',' << text::num(r.train_mse) << ',' << text::num(r.val_mse) << '\n';
}

}  // namespace understory
