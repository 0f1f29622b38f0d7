#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "understory/error.hpp"
#include "understory/training.hpp"

using namespace understory;
using namespace understory::testing;

namespace {

NetConfig small_net(PatchDims dims) {
  NetConfig c;
  c.input = dims;
  c.channels = NetConfig::desk_channels();
  c.hidden = {16, 8};
  return c;
}

// Random inputs; target = f(apex) on occupied samples, void otherwise.
template <typename F>
PatchDataset synthetic(std::size_t n, PatchDims dims, double void_rate, std::uint64_t seed, F target) {
  PatchDataset ds;
  ds.dims = dims;
  Rng rng(seed);
  std::vector<float> t(dims.count());
  for (std::size_t i = 0; i < n; ++i) {
    for (float& v : t) v = static_cast<float>(rng.uniform());
    const double u = rng.uniform();
    const Split s = u < 0.7 ? Split::Train : (u < 0.85 ? Split::Val : Split::Test);
    const bool is_void = rng.uniform() < void_rate;
    ds.append(t, static_cast<float>(target(t)), is_void, s, 0, static_cast<int>(i % 100), static_cast<int>(i / 100));
  }
  return ds;
}

TrainOptions quick(int epochs) {
  TrainOptions o;
  o.batch_size = 32;
  o.epochs = epochs;
  o.seed = 3;
  o.adam.learning_rate = 3e-3;
  return o;
}

}  // namespace

TEST(Fit, LearnsConstantTarget) {
  const PatchDims dims{2, 2, 3};
  const auto ds = synthetic(600, dims, 0.0, 1, [](const std::vector<float>&) { return 0.35; });
  const FitResult r = fit_new(small_net(dims), ds, quick(20));
  EXPECT_LE(r.history.size(), 20u);
  EXPECT_LT(split_mse(r.model, ds, Split::Test), 1e-2);
}

TEST(Fit, ImprovesOnLinearTarget) {
  const PatchDims dims{2, 2, 3};
  const auto ds = synthetic(1500, dims, 0.0, 2, [](const std::vector<float>& t) { return 0.2 + 0.6 * t[5]; });
  const FitResult r = fit_new(small_net(dims), ds, quick(15));
  EXPECT_LT(r.best_val_mse, 0.5 * r.history.front().val_mse + 1e-4);
  EXPECT_LT(split_mse(r.model, ds, Split::Test), 0.01);
}

TEST(Fit, DeterministicGivenSeed) {
  const PatchDims dims{2, 2, 3};
  const auto ds = synthetic(300, dims, 0.2, 4, [](const std::vector<float>& t) { return t[0]; });
  const FitResult a = fit_new(small_net(dims), ds, quick(3));
  const FitResult b = fit_new(small_net(dims), ds, quick(3));
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_mse, b.history[i].train_mse);
    EXPECT_EQ(a.history[i].val_mse, b.history[i].val_mse);
  }
  EXPECT_EQ(a.model.params, b.model.params);
  TrainOptions w = quick(3);
  w.workers = 3;
  w.chunk = 8;
  TrainOptions one = quick(3);
  one.chunk = 8;
  EXPECT_EQ(fit_new(small_net(dims), ds, w).best_val_mse, fit_new(small_net(dims), ds, one).best_val_mse);
}

TEST(Fit, BestEpochWeightsAreReturned) {
  const PatchDims dims{2, 2, 3};
  const auto ds = synthetic(300, dims, 0.0, 5, [](const std::vector<float>& t) { return t[0] * t[1]; });
  const FitResult r = fit_new(small_net(dims), ds, quick(6));
  double best = INFINITY;
  for (const auto& e : r.history) best = std::min(best, e.val_mse);
  EXPECT_EQ(r.best_val_mse, best);
  EXPECT_NEAR(split_mse(r.model, ds, Split::Val), best, 1e-12);
  EXPECT_EQ(r.history[static_cast<std::size_t>(r.best_epoch - 1)].val_mse, best);
}

TEST(Fit, PatienceStopsEarly) {
  const PatchDims dims{2, 2, 3};
  const auto ds = synthetic(200, dims, 0.0, 6, [](const std::vector<float>&) { return 0.5; });
  TrainOptions o = quick(50);
  o.patience = 2;
  const FitResult r = fit_new(small_net(dims), ds, o);
  EXPECT_LT(r.history.size(), 50u);
  EXPECT_LE(static_cast<int>(r.history.size()), r.best_epoch + 2);
}

TEST(Fit, ValidationIgnoresVoids) {
  const PatchDims dims{2, 2, 3};
  const auto ds = synthetic(400, dims, 0.5, 7, [](const std::vector<float>& t) { return 0.5 + 0.4 * t[0]; });
  const FitResult r = fit_new(small_net(dims), ds, quick(2));
  EXPECT_FALSE(std::isnan(r.best_val_mse));
  EXPECT_NEAR(split_mse(r.model, ds, Split::Val), r.best_val_mse, 1e-12);
}

TEST(Fit, RejectsEmptyTrainingSplit) {
  const PatchDims dims{2, 2, 3};
  PatchDataset ds;
  ds.dims = dims;
  const std::vector<float> t(12, 0.5f);
  ds.append(t, 0.5f, false, Split::Val, 0, 0, 0);
  EXPECT_THROW(fit_new(small_net(dims), ds, quick(1)), Error);
  const auto ok = synthetic(50, dims, 0.0, 8, [](const std::vector<float>&) { return 0.1; });
  EXPECT_THROW(fit_new(small_net(PatchDims{2, 2, 4}), ok, quick(1)), Error);
}

TEST(IdentityMse, UsesApexValue) {
  const PatchDims dims{1, 1, 2};
  PatchDataset ds;
  ds.dims = dims;
  ds.append(std::vector<float>{0.5f, 0.0f}, 0.25f, false, Split::Val, 0, 0, 0);
  ds.append(std::vector<float>{0.1f, 0.0f}, 0.0f, true, Split::Val, 0, 1, 0);
  ds.append(std::vector<float>{0.2f, 0.0f}, 0.6f, false, Split::Val, 0, 2, 0);
  EXPECT_NEAR(split_identity_mse(ds, Split::Val), (0.0625 + 0.16) / 2.0, 1e-7);
  EXPECT_TRUE(std::isnan(split_identity_mse(ds, Split::Test)));
}

TEST(GainOverIdentity, PairedStatistics) {
  const PatchDims dims{2, 2, 3};
  PatchDataset ds;
  ds.dims = dims;
  const std::vector<std::pair<float, float>> rows{{0.5f, 0.3f}, {0.1f, 0.45f}, {0.9f, 0.2f}, {0.3f, 0.35f}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<float> t(dims.count(), 0.0f);
    t[0] = rows[i].first;
    ds.append(t, rows[i].second, false, Split::Val, 0, static_cast<int>(i), 0);
  }
  ds.append(std::vector<float>(dims.count(), 0.7f), 0.0f, true, Split::Val, 0, 9, 0);

  LayerModel<float> m = LayerModel<float>::zeros(small_net(dims));
  m.params[m.layout().dense_bias.back().offset] = 0.3f;
  std::vector<double> d;
  for (const auto& [apex, target] : rows) {
    const double ei = double(apex) - double(target), em = 0.3 - double(target);
    d.push_back(ei * ei - em * em);
  }
  const double mean = (d[0] + d[1] + d[2] + d[3]) / 4.0;
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const GainTest g = gain_over_identity(m, ds, Split::Val);
  EXPECT_EQ(g.n, 4u);
  EXPECT_NEAR(g.mean_gain, mean, 1e-6);
  EXPECT_NEAR(g.std_error, std::sqrt(ss / 3.0 / 4.0), 1e-6);
  EXPECT_NEAR(g.z(), mean / std::sqrt(ss / 12.0), 1e-4);

  const GainTest same = gain_over_identity(LayerModel<float>::identity_fallback(small_net(dims)), ds, Split::Val);
  EXPECT_EQ(same.mean_gain, 0.0);
  EXPECT_EQ(same.z(), 0.0);
  EXPECT_EQ(gain_over_identity(m, ds, Split::Test).n, 0u);
}

TEST(LossCsv, Format) {
  std::ostringstream out;
  write_loss_csv(out, {{1, 0.5, 0.25}, {2, 0.125, 0.0625}});
  EXPECT_EQ(out.str(), "epoch,train_mse,val_mse\n1,0.5,0.25\n2,0.125,0.0625\n");
}
