#include "understory/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "understory/error.hpp"
#include "understory/rng.hpp"
#include "text_util.hpp"

namespace understory {

PipelineConfig PipelineConfig::desk() {
  PipelineConfig c;
  c.net.input = PatchDims{2, 2, 8};
  c.net.channels = NetConfig::desk_channels();
  c.dataset.dims = c.net.input;
  c.train.batch_size = 64;
  c.train.epochs = 8;
  c.train.max_train_patches = 4000;
  return c;
}

PipelineConfig PipelineConfig::paper_scale() {
  PipelineConfig c;
  c.dims = Dims3{440, 440, 440};
  c.pose_spacing = 3.0;
  c.camera = CameraIntrinsics{440, 50.0};
  c.net.input = PatchDims{2, 2, 20};
  c.net.channels = NetConfig::full_channels();
  c.dataset.dims = c.net.input;
  c.train.batch_size = 256;
  c.train.epochs = 20;
  c.train.max_train_patches = 0;
  return c;
}

ApertureSquare PipelineConfig::aperture() const {
  return ApertureSquare{0.5 * forest.plot_side, 0.5 * forest.plot_side, aperture_side, altitude};
}

void PipelineConfig::validate() const {
  forest.validate();
  camera.validate();
  net.validate();
  require_input(dims.w >= 4 && dims.h >= 4 && dims.d >= 4, "volume dims must be at least 4 per axis");
  require_input(z_top > 0.0, "z_top must be positive");
  require_input(aperture_side > 0.0 && pose_spacing > 0.0, "aperture side and pose spacing must be positive");
  require_input(altitude > z_top, "altitude must lie above the volume top");
  require_input(net.input == dataset.dims, "network input dims differ from dataset patch dims");
  require_input(workers >= 1, "workers must be at least 1");
}

SimulatedPlot simulate_plot(const PipelineConfig& config, double density, std::uint64_t seed) {
  config.validate();
  SimulatedPlot p;
  p.density = density;
  p.seed = seed;
  ForestSpec spec = config.forest;
  spec.density = density;
  spec.seed = seed;
  p.scene = generate_forest(spec);
  p.truth = voxelize(p.scene, config.dims, config.z_top);
  const ApertureSquare sq = config.aperture();
  const auto poses = plan_grid(sq.side, config.pose_spacing, sq.altitude, sq.center_x, sq.center_y);
  p.scan = render_scan(p.truth, poses, config.camera, 0.0f, config.workers);
  p.stack = build_focal_stack(p.scan, p.truth.stack_geometry(), config.workers);
  return p;
}

namespace {

std::string layer_id(const char* prefix, int layer) {
  std::string digits = std::to_string(layer);
  while (digits.size() < 4) digits.insert(digits.begin(), '0');
  return std::string(prefix) + "-" + digits;
}

}  // namespace

std::vector<LayerResult> train_all_layers(std::span<const PlotData> plots, const NetConfig& net,
                                          const DatasetOptions& dataset, const TrainOptions& train,
                                          const SelectionOptions& selection, std::ostream* log) {
  require_input(!plots.empty(), "training needs at least one plot");
  require_input(net.input == dataset.dims, "network input dims differ from dataset patch dims");
  const Dims3 dims = plots.front().stack->geometry.dims;
  for (const auto& p : plots) {
    require_input(p.stack->geometry.dims == dims && p.truth->dims == dims,
                  "all plots must share dims " + to_string(dims));
  }

  std::vector<LayerResult> out(static_cast<std::size_t>(dims.d));
  for (int layer = 0; layer < dims.d; ++layer) {
    LayerResult& r = out[static_cast<std::size_t>(layer)];
    DatasetOptions dopt = dataset;
    dopt.include_void = false;
    const PatchDataset ds = build_dataset(plots, layer, dopt);
    r.train_patches = ds.count(Split::Train);
    r.void_patches = ds.void_count();
    r.val_identity_mse = split_identity_mse(ds, Split::Val);
    if (r.train_patches == 0) {
      r.model = LayerModel<float>::identity_fallback(net);
      r.model.id = layer_id("identity", layer);
      r.fallback = true;
      r.fallback_reason = "no non-void training patches";
      r.val_mse = r.val_identity_mse;
    } else {
      TrainOptions topt = train;
      topt.seed = derive_seed(train.seed, static_cast<std::uint64_t>(layer));
      FitResult fr = fit_new(net, ds, topt);
      r.history = std::move(fr.history);
      r.val_mse = split_mse(fr.model, ds, Split::Val);
      const GainTest gain = gain_over_identity(fr.model, ds, Split::Val);
      r.gain_z = gain.z();
      const bool worse = std::isfinite(r.val_mse) && std::isfinite(r.val_identity_mse) && r.val_mse > r.val_identity_mse;
      const bool unchecked = gain.n == 0;
      const bool weak = !unchecked && !worse && r.gain_z < selection.min_z;
      if (selection.identity_if_worse && (worse || weak || unchecked)) {
        r.model = LayerModel<float>::identity_fallback(net);
        r.model.id = layer_id("identity", layer);
        r.fallback = true;
        r.fallback_reason = worse       ? "trained model worse than uncorrected on validation"
                            : unchecked ? "no non-void validation patches"
                                        : "gain over uncorrected not significant on validation";
        r.val_mse = r.val_identity_mse;
      } else {
        r.model = std::move(fr.model);
        r.model.id = layer_id("layer", layer);
      }
    }
    if (log) {
      *log << "layer=" << layer << " train_patches=" << r.train_patches << " val_mse=" << text::num(r.val_mse)
           << " val_identity_mse=" << text::num(r.val_identity_mse) << " gain_z=" << text::num(r.gain_z)
           << " fallback=" << (r.fallback ? 1 : 0);
      if (r.fallback) *log << " warning=\"" << r.fallback_reason << '"';
      *log << '\n';
    }
  }
  return out;
}

std::vector<LayerModel<float>> models_of(const std::vector<LayerResult>& results) {
  std::vector<LayerModel<float>> m;
  m.reserve(results.size());
  for (const auto& r : results) m.push_back(r.model);
  return m;
}

ReflectanceStack correct_stack(const FocalStack& stack, std::span<const LayerModel<float>> models,
                               const ApertureSquare& aperture, int workers) {
  const StackGeometry& g = stack.geometry;
  g.validate();
  require_input(models.size() == static_cast<std::size_t>(g.dims.d),
                "expected " + std::to_string(g.dims.d) + " layer models, got " + std::to_string(models.size()));
  const PatchDims pd = models.front().config.input;
  for (const auto& m : models) require_input(m.config.input == pd, "layer models disagree on patch dims");

  ReflectanceStack out;
  out.geometry = g;
  out.values.assign(g.dims.count(), 0.0f);
  out.provenance.resize(static_cast<std::size_t>(g.dims.d));

  auto do_layer = [&](int layer) {
    const LayerModel<float>& model = models[static_cast<std::size_t>(layer)];
    const std::size_t n = g.dims.layer_count();
    std::vector<float> patches(n * pd.count());
    for (int y = 0; y < g.dims.h; ++y) {
      for (int x = 0; x < g.dims.w; ++x) {
        const std::size_t k = static_cast<std::size_t>(y) * g.dims.w + x;
        const Frustum fr = receptive_frustum(g, x, y, layer, aperture);
        sample_patch_into(stack, fr, pd, std::span<float>(patches.data() + k * pd.count(), pd.count()));
      }
    }
    const auto pred = forward<float>(model, patches);
    const std::size_t base = g.dims.index(0, 0, layer);
    for (std::size_t k = 0; k < n; ++k) {
      const float v = pred[k];
      out.values[base + k] = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
    }
    out.provenance[static_cast<std::size_t>(layer)] = model.id;
  };

  const int nw = std::clamp(workers, 1, g.dims.d);
  if (nw == 1) {
    for (int l = 0; l < g.dims.d; ++l) do_layer(l);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < nw; ++w) {
      pool.emplace_back([&, w] {
        for (int l = w; l < g.dims.d; l += nw) do_layer(l);
      });
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

double rmse_pct(double mse) {
  require_input(mse >= 0.0, "MSE must be non-negative");
  return 100.0 * std::sqrt(mse);
}

double LayerEval::uncorrected_rmse_pct() const { return rmse_pct(uncorrected_mse); }
double LayerEval::corrected_rmse_pct() const { return rmse_pct(corrected_mse); }
double LayerEval::improvement() const {
  if (corrected_mse == 0.0) return uncorrected_mse == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return uncorrected_mse / corrected_mse;
}

std::vector<const LayerEval*> EvalReport::below_canopy() const {
  std::vector<const LayerEval*> out;
  for (const auto& l : layers) {
    if (l.layer <= canopy_top_layer && l.occupied > 0) out.push_back(&l);
  }
  return out;
}

std::vector<const LayerEval*> EvalReport::deepest_quartile() const {
  auto below = below_canopy();
  if (below.empty()) return below;
  std::sort(below.begin(), below.end(), [](const LayerEval* a, const LayerEval* b) { return a->layer < b->layer; });
  const std::size_t n = std::max<std::size_t>(1, below.size() / 4);
  below.resize(n);
  return below;
}

double EvalReport::deepest_quartile_improvement() const {
  const auto q = deepest_quartile();
  require(!q.empty(), ErrorKind::Invariant, "report has no below-canopy layers");
  double u = 0.0, c = 0.0;
  for (const auto* l : q) {
    u += l->uncorrected_mse;
    c += l->corrected_mse;
  }
  if (c == 0.0) return u == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return u / c;
}

double EvalReport::fraction_not_worse() const {
  const auto below = below_canopy();
  require(!below.empty(), ErrorKind::Invariant, "report has no below-canopy layers");
  std::size_t ok = 0;
  for (const auto* l : below) ok += l->corrected_mse <= l->uncorrected_mse ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(below.size());
}

double EvalReport::depth_mse_spearman() const {
  const auto below = below_canopy();
  std::vector<double> depth, mse;
  for (const auto* l : below) {
    depth.push_back(l->depth_below_canopy);
    mse.push_back(l->uncorrected_mse);
  }
  return spearman(depth, mse);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  require_input(a.size() == b.size(), "spearman inputs differ in length");
  require_input(a.size() >= 2, "spearman needs at least two samples");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> layer_mse(std::span<const float> values, const GroundTruthVolume& truth) {
  require_input(values.size() == truth.dims.count(), "values and truth differ in size");
  std::vector<double> mse(static_cast<std::size_t>(truth.dims.d), 0.0);
  for (int z = 0; z < truth.dims.d; ++z) {
    double sse = 0.0;
    std::size_t n = 0;
    const std::size_t base = truth.dims.index(0, 0, z);
    for (std::size_t k = 0; k < truth.dims.layer_count(); ++k) {
      if (!truth.occupied[base + k]) continue;
      const double e = static_cast<double>(values[base + k]) - truth.reflectance[base + k];
      sse += e * e;
      ++n;
    }
    mse[static_cast<std::size_t>(z)] = n > 0 ? sse / static_cast<double>(n) : 0.0;
  }
  return mse;
}

EvalReport evaluate(const FocalStack& stack, const ReflectanceStack* corrected, const GroundTruthVolume& truth,
                    double density) {
  require_input(stack.geometry.dims == truth.dims,
                "stack " + to_string(stack.geometry.dims) + " and truth " + to_string(truth.dims) + " differ");
  if (corrected) {
    require_input(corrected->geometry.dims == truth.dims, "corrected stack and truth differ in dims");
  }
  EvalReport rep;
  rep.density = density;
  rep.canopy_top_layer = 0;
  std::vector<std::size_t> occ(static_cast<std::size_t>(truth.dims.d), 0);
  for (int z = 0; z < truth.dims.d; ++z) {
    const std::size_t base = truth.dims.index(0, 0, z);
    for (std::size_t k = 0; k < truth.dims.layer_count(); ++k) occ[static_cast<std::size_t>(z)] += truth.occupied[base + k];
    if (z > 0 && occ[static_cast<std::size_t>(z)] > 0) rep.canopy_top_layer = z;
  }
  const auto u = layer_mse(stack.values, truth);
  const auto c = corrected ? layer_mse(corrected->values, truth) : u;
  for (int z = 0; z < truth.dims.d; ++z) {
    LayerEval e;
    e.layer = z;
    e.depth_below_canopy = rep.canopy_top_layer - z;
    e.occupied = occ[static_cast<std::size_t>(z)];
    e.uncorrected_mse = u[static_cast<std::size_t>(z)];
    e.corrected_mse = c[static_cast<std::size_t>(z)];
    rep.layers.push_back(e);
  }
  return rep;
}

namespace {

void write_eval_fields(std::ostream& out, const LayerEval& l) {
  out << l.layer << ',' << l.depth_below_canopy << ',' << l.occupied << ',' << text::num(l.uncorrected_mse) << ','
      << text::num(l.corrected_mse) << ',' << text::num(l.uncorrected_rmse_pct()) << ','
      << text::num(l.corrected_rmse_pct()) << ',' << text::num(l.improvement());
}

constexpr const char* kEvalHeader =
    "layer,depth_below_canopy,occupied,uncorrected_mse,corrected_mse,uncorrected_rmse_pct,corrected_rmse_pct,"
    "improvement";

}  // namespace

void write_eval_csv(std::ostream& out, const EvalReport& report) {
  out << kEvalHeader << '\n';
  for (const auto& l : report.layers) {
    write_eval_fields(out, l);
    out << '\n';
  }
}

std::vector<std::uint64_t> sweep_plot_seeds(std::uint64_t seed, int train_plots) {
  std::vector<std::uint64_t> s;
  for (int k = 0; k <= train_plots; ++k) s.push_back(derive_seed(seed, static_cast<std::uint64_t>(k)));
  return s;
}

std::vector<SweepRow> density_sweep(const PipelineConfig& config, const SweepOptions& options, std::ostream* log) {
  require_input(!options.densities.empty() && !options.seeds.empty(), "sweep needs densities and seeds");
  require_input(!options.correct || options.train_plots >= 1, "training needs at least one plot");
  std::vector<SweepRow> rows;
  for (double density : options.densities) {
    for (std::uint64_t seed : options.seeds) {
      const auto seeds = sweep_plot_seeds(seed, options.correct ? options.train_plots : 0);
      const SimulatedPlot held = simulate_plot(config, density, seeds.back());
      EvalReport rep;
      if (options.correct) {
        std::vector<SimulatedPlot> train;
        for (std::size_t k = 0; k + 1 < seeds.size(); ++k) train.push_back(simulate_plot(config, density, seeds[k]));
        std::vector<PlotData> pd;
        for (const auto& p : train) pd.push_back(PlotData{&p.stack, &p.truth, config.aperture()});
        TrainOptions topt = config.train;
        topt.workers = config.workers;
        DatasetOptions dopt = config.dataset;
        dopt.workers = config.workers;
        const auto results = train_all_layers(pd, config.net, dopt, topt,
                                              SelectionOptions{config.identity_if_worse, config.selection_z});
        const auto models = models_of(results);
        const ReflectanceStack rs = correct_stack(held.stack, models, config.aperture(), config.workers);
        rep = evaluate(held.stack, &rs, held.truth, density);
      } else {
        rep = evaluate(held.stack, nullptr, held.truth, density);
      }
      if (log) {
        *log << "density=" << text::num(density) << " seed=" << seed << " canopy_top=" << rep.canopy_top_layer
             << " deepest_uncorrected_mse=" << text::num(rep.layers.front().uncorrected_mse) << '\n';
      }
      for (const auto& l : rep.layers) rows.push_back(SweepRow{density, seed, l});
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "density,seed," << kEvalHeader << '\n';
  for (const auto& r : rows) {
    out << text::num(r.density) << ',' << r.seed << ',';
    write_eval_fields(out, r.eval);
    out << '\n';
  }
}

}  // namespace understory
