// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "understory/aperture.hpp"
#include "understory/corrector_net.hpp"
#include "understory/error.hpp"
#include "understory/model_io.hpp"
#include "understory/pipeline.hpp"
#include "understory/receptive_field.hpp"
#include "understory/rng.hpp"
#include "understory/scene_sim.hpp"
#include "understory/spectral.hpp"
#include "understory/training.hpp"
#include "understory/volume_io.hpp"

namespace fs = std::filesystem;
using namespace understory;
using understory::testing::set_voxel;
using understory::testing::textured_ground;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed checks of one criterion with a short reason each.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool passed() const { return failures_.empty(); }
  std::string summary() const {
    std::string out;
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) out += (out.empty() ? "failed: " : "; failed: ") + f;
    return out;
  }

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Invariant;  // nothing thrown; never an expected fault kind below
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Corrupts a file in the four usual ways and checks the loader's error kinds.
void fault_suite(Checks& c, const std::string& tag, const fs::path& good,
                 const std::function<void(const std::string&)>& load) {
  const auto bytes = read_bytes(good);
  const fs::path bad = good.string() + ".bad";
  auto expect = [&](std::vector<std::uint8_t> b, ErrorKind k, const std::string& what) {
    write_bytes(bad, b);
    const ErrorKind got = kind_of([&] { load(bad.string()); });
    c.expect(got == k, tag + " " + what + " gave " + std::string(to_string(got)));
  };
  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  expect(truncated, ErrorKind::Checksum, "truncated");
  auto foreign = bytes;
  foreign[0] = 'X';
  expect(foreign, ErrorKind::Format, "foreign magic");
  auto future = bytes;
  future[4] = 99;
  future[5] = 0;
  expect(future, ErrorKind::Version, "future version");
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  expect(flipped, ErrorKind::Checksum, "flipped byte");
  const ErrorKind missing = kind_of([&] { load((good.parent_path() / "missing.bin").string()); });
  c.expect(missing == ErrorKind::Io, tag + " missing file gave " + std::string(to_string(missing)));
  fs::remove(bad);
}

// ---- shared desk-scale data ---------------------------------------------------

constexpr double kDeskDensity = 220.0;
const std::vector<std::uint64_t> kTrainSeeds{11, 12, 13};
const std::vector<std::uint64_t> kHeldOutSeeds{21, 22, 23};

struct DeskPlots {
  PipelineConfig config = PipelineConfig::desk();
  std::vector<SimulatedPlot> train;
  std::vector<PlotData> train_data() const {
    std::vector<PlotData> d;
    for (const auto& p : train) d.push_back({&p.stack, &p.truth, config.aperture()});
    return d;
  }
};

DeskPlots& desk_plots() {
  static DeskPlots plots = [] {
    DeskPlots d;
    for (auto s : kTrainSeeds) d.train.push_back(simulate_plot(d.config, kDeskDensity, s));
    return d;
  }();
  return plots;
}

// ---- criteria -------------------------------------------------------------------

void c1_param_counts(Checks& c, const fs::path&) {
  const auto t0 = Clock::now();
  const std::vector<std::pair<std::array<int, 3>, std::uint64_t>> table{
      {{2, 2, 20}, 6143009ull},   {{2, 2, 3}, 3914785ull},       {{2, 2, 40}, 8764449ull},
      {{16, 16, 20}, 171293729ull}, {{16, 16, 40}, 339065889ull}};
  for (const auto& [d, want] : table) {
    const auto got = param_count(d[0], d[1], d[2]);
    c.expect(got == want, std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]) + " -> " +
                              std::to_string(got));
  }
  const double t = seconds_since(t0);
  c.expect(t < 1.0, "runtime " + fmt(t) + " s");
  c.note("5 configurations exact");
}

void c2_rmse(Checks& c, const fs::path&) {
  const std::vector<std::pair<double, double>> pairs{{0.0022, 4.7}, {0.0014, 3.7}, {0.0060, 7.7}};
  for (const auto& [mse, pct] : pairs) {
    const double got = rmse_pct(mse);
    c.expect(std::abs(got - pct) <= 0.05, "rmse_pct(" + fmt(mse) + ") = " + fmt(got));
    c.note(fmt(mse) + "->" + fmt(got, 3));
  }
}

void c3_gradients(Checks& c, const fs::path&) {
  const auto t0 = Clock::now();
  const NetConfig cfg = testing::gradcheck_config();
  const auto model = LayerModel<double>::initialized(cfg, 11, 0.2);
  const auto inputs = testing::random_values(cfg.input.count() * 3, 12);
  const auto targets = testing::random_values(3, 13);
  const testing::GradCheck r = testing::check_gradients(model, inputs, targets);
  const double t = seconds_since(t0);
  c.expect(r.checked == cfg.param_count(), "checked " + std::to_string(r.checked) + " parameters");
  c.expect(r.max_rel_error < 1e-4, "max relative error " + fmt(r.max_rel_error) + " at " + std::to_string(r.worst_index));
  c.expect(t < 300.0, "runtime " + fmt(t) + " s");
  c.note(std::to_string(r.checked) + " params, max rel err " + fmt(r.max_rel_error, 3) + ", " + fmt(t, 3) + " s");
}

void c4_depth_trend(Checks& c, const fs::path& work) {
  const auto t0 = Clock::now();
  DeskPlots& d = desk_plots();
  const auto data = d.train_data();
  std::ofstream log(work / "c4_train.log");
  const auto results = train_all_layers(data, d.config.net, d.config.dataset, d.config.train,
                                        SelectionOptions{d.config.identity_if_worse, d.config.selection_z}, &log);
  const auto models = models_of(results);
  for (auto seed : kHeldOutSeeds) {
    const SimulatedPlot p = simulate_plot(d.config, kDeskDensity, seed);
    const ReflectanceStack rs = correct_stack(p.stack, models, d.config.aperture());
    const EvalReport rep = evaluate(p.stack, &rs, p.truth, kDeskDensity);
    std::ofstream csv(work / ("c4_report_seed" + std::to_string(seed) + ".csv"));
    write_eval_csv(csv, rep);
    const double rho = rep.depth_mse_spearman();
    const double frac = rep.fraction_not_worse();
    const double impr = rep.deepest_quartile_improvement();
    const std::string tag = "seed " + std::to_string(seed);
    c.expect(rho > 0.0, tag + " spearman " + fmt(rho));
    c.expect(frac >= 0.9, tag + " fraction not worse " + fmt(frac));
    c.expect(impr >= 1.5, tag + " deepest-quartile improvement " + fmt(impr));
    c.note(tag + ": rho " + fmt(rho, 3) + ", not worse " + fmt(frac, 3) + ", dq x" + fmt(impr, 3));
  }
  const double t = seconds_since(t0);
  c.expect(t <= 7200.0, "runtime " + fmt(t) + " s");
  c.note(fmt(t, 4) + " s");
}

void c5_density_trend(Checks& c, const fs::path& work) {
  PipelineConfig cfg = PipelineConfig::desk();
  SweepOptions opt;
  opt.densities = {150.0, 225.0, 300.0};
  opt.seeds = {1, 2, 3};
  opt.correct = false;
  const auto rows = density_sweep(cfg, opt);
  std::ofstream csv(work / "c5_sweep.csv");
  write_sweep_csv(csv, rows);
  std::vector<double> mean;
  for (double dens : opt.densities) {
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows) {
      if (r.density == dens && r.eval.layer == 0) {
        s += r.eval.uncorrected_mse;
        ++n;
      }
    }
    mean.push_back(n ? s / n : std::numeric_limits<double>::quiet_NaN());
    c.note(fmt(dens) + ": " + fmt(mean.back()));
  }
  for (std::size_t i = 1; i < mean.size(); ++i) {
    c.expect(mean[i] >= mean[i - 1], "mean deepest-layer MSE drops from " + fmt(mean[i - 1]) + " to " + fmt(mean[i]));
  }
}

void c6_sensor_map(Checks& c, const fs::path&) {
  const SensorStats hand{.mu_c = 0.5, .sigma_c = 0.2, .mu_r = 0.4, .sigma_r = 0.1, .footprint_count = 0};
  c.expect(sensor_map_value(0.4, hand) == 0.5, "0.4 -> " + fmt(sensor_map_value(0.4, hand), 17));
  c.expect(sensor_map_value(0.5, hand) == 0.7, "0.5 -> " + fmt(sensor_map_value(0.5, hand), 17));

  // Post-condition on a simulated plot: the centre image stands in for the camera.
  PipelineConfig cfg = PipelineConfig::desk();
  const SimulatedPlot p = simulate_plot(cfg, kDeskDensity, 41);
  ReflectanceStack rs{p.stack.geometry, p.stack.values, {}};
  const DepthMap top = extract_top_layer(p.truth);
  const std::size_t ci = p.scan.center_pose_index();
  const CameraPose& pose = p.scan.poses[ci];
  const Image& centre = p.scan.images[ci];
  const MappedStack m = sensor_map(rs, top, centre, pose, p.scan.intrinsics);
  const auto pts = footprint_points(rs.geometry, top, pose, p.scan.intrinsics);
  double mean = 0.0, var = 0.0;
  for (std::size_t i : pts) mean += m.values[i];
  mean /= static_cast<double>(pts.size());
  for (std::size_t i : pts) var += (m.values[i] - mean) * (m.values[i] - mean);
  const double sd = std::sqrt(var / static_cast<double>(pts.size()));
  c.expect(std::abs(mean - m.stats.mu_c) <= 1e-9, "footprint mean off by " + fmt(mean - m.stats.mu_c));
  c.expect(std::abs(sd - m.stats.sigma_c) <= 1e-9, "footprint std off by " + fmt(sd - m.stats.sigma_c));
  c.note(std::to_string(pts.size()) + " footprint points, |dmu| " + fmt(std::abs(mean - m.stats.mu_c), 2) +
         ", |dsigma| " + fmt(std::abs(sd - m.stats.sigma_c), 2));
}

void c7_ndvi_biomass(Checks& c, const fs::path&) {
  c.expect(ndvi_value(0.8, 0.2) == 0.6f, "ndvi(0.8, 0.2) = " + fmt(ndvi_value(0.8, 0.2), 9));

  StackGeometry g;
  g.dims = Dims3{11583, 1, 1};
  g.extent = 11583.0;
  g.heights = {1.0};
  IndexStack s;
  s.geometry = g;
  for (int i = 0; i < 11583; ++i) s.values.push_back(i < 3793 ? 0.5f : 0.1f);
  s.mask.assign(11583, 1);
  s.zero_sum.assign(11583, 0);
  const BiomassResult b = biomass_fraction(s, 0.33, 0.001);
  c.expect(std::abs(100.0 * b.fraction - 32.75) <= 0.01, "biomass " + fmt(100.0 * b.fraction, 6) + "%");
  c.note("biomass " + fmt(100.0 * b.fraction, 6) + "% of " + fmt(b.total_volume, 6));

  // Everything above the top layer becomes the sentinel and leaves the biomass totals.
  StackGeometry cg;
  cg.dims = Dims3{4, 3, 5};
  cg.extent = 4.0;
  cg.extent_y = 3.0;
  for (int k = 0; k < 5; ++k) cg.heights.push_back(k + 1.0);
  std::vector<double> nir(cg.dims.count(), 0.6), red(cg.dims.count(), 0.2);
  const IndexStack idx = ndvi(cg, nir, red);
  DepthMap top(4, 3);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) top.at(x, y) = (x + y) % 5;
  }
  const IndexStack masked = remove_above_canopy(idx, top);
  std::size_t kept = 0, wrong = 0;
  for (int z = 0; z < 5; ++z) {
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 4; ++x) {
        const std::size_t i = cg.dims.index(x, y, z);
        if (z > top.at(x, y)) {
          wrong += masked.values[i] != IndexStack::kSentinel || masked.mask[i] != 0;
        } else {
          wrong += masked.values[i] != idx.values[i] || masked.mask[i] != 1;
          ++kept;
        }
      }
    }
  }
  c.expect(wrong == 0, std::to_string(wrong) + " voxels masked incorrectly");
  c.expect(IndexStack::kSentinel == -1.01f, "sentinel value");
  const BiomassResult mb = biomass_fraction(masked, -1.0, 1.0);
  c.expect(mb.total_count == kept, "biomass counts " + std::to_string(mb.total_count) + " of " + std::to_string(kept));
}

void c8_defocus(Checks& c, const fs::path&) {
  c.expect(defocus_weight(24.0, 12.0, 15.0) == 1.0 / 37.0, "defocus_weight = " + fmt(defocus_weight(24, 12, 15), 17));

  // Textured ground under a partial occluder layer, focused on the ground.
  const Dims3 dims{16, 16, 16};
  GroundTruthVolume v = textured_ground(dims, 30.0, 20.0, 81);
  Rng rng(82);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (rng.uniform() < 0.35) set_voxel(v, x, y, 10, static_cast<float>(rng.uniform(0.3, 0.9)));
    }
  }
  const ApertureSquare ap{15.0, 15.0, 24.0, 35.0};
  const auto poses = plan_grid(ap.side, 3.0, ap.altitude, ap.center_x, ap.center_y);
  const ApertureScan scan = render_scan(v, poses, CameraIntrinsics{128, 50.0});
  const StackGeometry geo = v.stack_geometry();
  const FocalStack stack = build_focal_stack(scan, geo);
  const auto analytic = analytic_focal_signal(v, ap, geo.heights[0]);
  std::vector<double> a, s;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (!stack.is_valid(x, y, 0)) continue;
      a.push_back(analytic[static_cast<std::size_t>(y) * 16 + x]);
      s.push_back(stack.at(x, y, 0));
    }
  }
  const double r = pearson(a, s);
  c.expect(a.size() == 256, std::to_string(a.size()) + " valid ground cells");
  c.expect(r > 0.8, "pearson " + fmt(r));
  c.note("pearson " + fmt(r, 4));
}

void c9_in_focus(Checks& c, const fs::path&) {
  const GroundTruthVolume v = textured_ground(Dims3{32, 32, 8}, 30.0, 20.0, 21);
  const auto poses = plan_grid(24.0, 6.0, 35.0, 15.0, 15.0);
  const ApertureScan scan = render_scan(v, poses, CameraIntrinsics{256, 50.0});
  const FocalStack s = build_focal_stack(scan, v.stack_geometry());
  std::vector<double> truth;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) truth.push_back(v.at(x, y, 0));
  }
  double sse = 0.0;
  int best = -1;
  double best_r = -2.0;
  for (int k = 0; k < 8; ++k) {
    std::vector<double> slice;
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) slice.push_back(s.at(x, y, k));
    }
    if (k == 0) {
      for (std::size_t i = 0; i < slice.size(); ++i) sse += (slice[i] - truth[i]) * (slice[i] - truth[i]);
    }
    const double r = pearson(slice, truth);
    if (r > best_r) {
      best_r = r;
      best = k;
    }
  }
  const double rmse = std::sqrt(sse / 1024.0);
  c.expect(rmse < 1e-3, "ground rmse " + fmt(rmse));
  c.expect(best == 0, "best slice " + std::to_string(best));
  c.note("rmse " + fmt(rmse, 3) + ", best slice " + std::to_string(best) + " (r " + fmt(best_r, 4) + ")");
}

void c10_round_trips(Checks& c, const fs::path& work) {
  const fs::path dir = work / "c10";
  fs::create_directories(dir);

  NetConfig nc;
  nc.input = PatchDims{2, 2, 3};
  nc.channels = NetConfig::desk_channels();
  nc.hidden = {8, 4};
  auto model = LayerModel<float>::initialized(nc, 5, 0.3f);
  model.id = "layer-0003";
  save_model((dir / "m.dfrm").string(), model);
  const auto back = load_model((dir / "m.dfrm").string());
  c.expect(back.params == model.params && back.config == model.config && back.id == model.id, "model round trip");
  fault_suite(c, "model", dir / "m.dfrm", [](const std::string& p) { load_model(p); });

  const GroundTruthVolume truth = textured_ground(Dims3{12, 12, 6}, 30.0, 20.0, 3);
  const auto poses = plan_grid(24.0, 12.0, 35.0, 15.0, 15.0);
  const FocalStack fsk = build_focal_stack(render_scan(truth, poses, CameraIntrinsics{48, 50.0}), truth.stack_geometry());
  write_volume((dir / "s.dfvl").string(), to_volume(fsk));
  const FocalStack fback = as_focal_stack(read_volume((dir / "s.dfvl").string()));
  c.expect(fback.values == fsk.values && fback.valid == fsk.valid && fback.geometry == fsk.geometry, "volume round trip");
  fault_suite(c, "volume", dir / "s.dfvl", [](const std::string& p) { read_volume(p); });

  DatasetOptions dopt;
  dopt.dims = nc.input;
  dopt.include_void = true;
  const std::vector<PlotData> plots{{&fsk, &truth, ApertureSquare{15.0, 15.0, 24.0, 35.0}}};
  const PatchDataset ds = build_dataset(plots, 2, dopt);
  write_dataset((dir / "d.dfpd").string(), ds);
  const PatchDataset dback = read_dataset((dir / "d.dfpd").string());
  bool same = dback.inputs == ds.inputs && dback.is_void == ds.is_void && dback.split == ds.split &&
              dback.plot == ds.plot && dback.x == ds.x && dback.y == ds.y && dback.targets.size() == ds.targets.size();
  for (std::size_t i = 0; same && i < ds.targets.size(); ++i) {
    same = ds.is_void[i] ? std::isnan(dback.targets[i]) : dback.targets[i] == ds.targets[i];
  }
  c.expect(same, "dataset round trip");
  fault_suite(c, "dataset", dir / "d.dfpd", [](const std::string& p) { read_dataset(p); });

  // 16-bit layers hold round(v * 65535): exact on the quantized grid.
  std::vector<float> vals(fsk.values.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = std::clamp(fsk.values[i], 0.0f, 1.0f);
  write_layers((dir / "layers").string(), fsk.geometry.dims, vals);
  const LayerImages li = read_layers((dir / "layers").string(), fsk.geometry.dims.d);
  bool exact = li.dims == fsk.geometry.dims && li.values.size() == vals.size();
  double worst = 0.0;
  for (std::size_t i = 0; exact && i < vals.size(); ++i) {
    exact = li.values[i] == dequantize16(quantize16(vals[i]));
    worst = std::max(worst, std::abs(static_cast<double>(li.values[i]) - vals[i]));
  }
  c.expect(exact && worst <= 0.5 / 65535.0 + 1e-9, "layer images round trip, worst " + fmt(worst));
  {
    std::ofstream bad(dir / "layers" / "layer_0000.pgm", std::ios::binary);
    bad << "P2\n2 2\n65535\n1 2 3 4\n";
  }
  const ErrorKind pgm = kind_of([&] { read_layers((dir / "layers").string(), fsk.geometry.dims.d); });
  c.expect(pgm == ErrorKind::Format, "ascii pgm gave " + std::string(to_string(pgm)));

  const VtiVolume vti = make_vti(fsk.geometry, {VtiArray{"opacity", vals}});
  write_vti((dir / "v.vti").string(), vti);
  const VtiVolume vback = read_vti((dir / "v.vti").string());
  c.expect(vback.dims == vti.dims && vback.arrays.size() == 1 && vback.arrays[0].values == vals &&
               vback.arrays[0].name == "opacity" && (vback.spacing - vti.spacing).norm() < 1e-12 &&
               (vback.origin - vti.origin).norm() < 1e-12,
           "vti round trip");
  std::ostringstream text;
  write_vti(text, vti);
  std::string body = text.str();
  const auto close = body.find("</DataArray>");
  const auto cut = body.find_last_not_of(" \n\t", close - 1);
  const auto start = body.find_last_of(" \n\t", cut);
  body.erase(start, cut - start + 1);
  std::istringstream in(body);
  const ErrorKind vk = kind_of([&] { read_vti(in); });
  c.expect(vk == ErrorKind::CountMismatch, "short vti array gave " + std::string(to_string(vk)));
  c.note("model, volume, dataset, layer images, vti; 5 faults per binary format");
}

struct DeskRun {
  std::vector<LayerResult> results;
  ReflectanceStack corrected;
  FocalStack stack;
};

DeskRun desk_run(int workers) {
  PipelineConfig cfg = PipelineConfig::desk();
  cfg.workers = workers;
  cfg.train.workers = workers;
  cfg.dataset.workers = workers;
  const SimulatedPlot p = simulate_plot(cfg, kDeskDensity, 51);
  const std::vector<PlotData> data{{&p.stack, &p.truth, cfg.aperture()}};
  DeskRun r;
  r.results = train_all_layers(data, cfg.net, cfg.dataset, cfg.train,
                               SelectionOptions{cfg.identity_if_worse, cfg.selection_z});
  r.corrected = correct_stack(p.stack, models_of(r.results), cfg.aperture(), workers);
  r.stack = p.stack;
  return r;
}

void c11_determinism(Checks& c, const fs::path&) {
  const DeskRun a = desk_run(1);
  const DeskRun b = desk_run(1);
  c.expect(a.stack.values == b.stack.values, "focal stacks differ");
  c.expect(encode_volume(to_volume(a.corrected)) == encode_volume(to_volume(b.corrected)), "reflectance stacks differ");
  bool models_same = a.results.size() == b.results.size();
  for (std::size_t k = 0; models_same && k < a.results.size(); ++k) {
    models_same = serialize(a.results[k].model) == serialize(b.results[k].model);
  }
  c.expect(models_same, "layer models differ");

  const int n = std::max(2u, std::thread::hardware_concurrency());
  const DeskRun w = desk_run(n);
  double worst = 0.0;
  for (std::size_t k = 0; k < a.results.size(); ++k) {
    const double x = a.results[k].val_mse, y = w.results[k].val_mse;
    if (std::isnan(x) && std::isnan(y)) continue;
    worst = std::max(worst, std::isnan(x) || std::isnan(y) ? INFINITY : std::abs(x - y));
  }
  c.expect(worst <= 1e-6, "workers=" + std::to_string(n) + " val mse differs by " + fmt(worst));
  c.note("workers=1 bit-exact; workers=" + std::to_string(n) + " max |dval| " + fmt(worst, 3));
}

void c12_void_filtering(Checks& c, const fs::path& work) {
  DeskPlots& d = desk_plots();
  const auto data = d.train_data();
  std::ofstream csv(work / "c12_void.csv");
  csv << "layer,void_inclusive_val_mse,void_filtered_val_mse\n";
  double sum_with = 0.0, sum_without = 0.0;
  for (int layer : {8, 12, 16, 20}) {
    double best[2];
    for (int with_void = 0; with_void < 2; ++with_void) {
      DatasetOptions dopt = d.config.dataset;
      dopt.include_void = with_void == 1;
      const PatchDataset ds = build_dataset(data, layer, dopt);
      TrainOptions topt = d.config.train;
      topt.seed = derive_seed(d.config.train.seed, static_cast<std::uint64_t>(layer));
      best[with_void] = fit_new(d.config.net, ds, topt).best_val_mse;
    }
    csv << layer << ',' << best[1] << ',' << best[0] << '\n';
    sum_with += best[1];
    sum_without += best[0];
    c.note("layer " + std::to_string(layer) + ": " + fmt(best[1]) + " vs " + fmt(best[0]));
  }
  c.expect(sum_with >= sum_without, "mean void-inclusive val mse " + fmt(sum_with / 4) + " below filtered " +
                                        fmt(sum_without / 4));
}

struct Criterion {
  int id;
  const char* name;
  void (*run)(Checks&, const fs::path&);
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = (fs::temp_directory_path() / "understory_acceptance").string();
  std::vector<int> only;
  app.add_option("--workdir", workdir, "directory for reports and scratch files");
  app.add_option("--only", only, "run just these criteria");
  CLI11_PARSE(app, argc, argv);
  const fs::path work(workdir);
  fs::create_directories(work);

  const std::vector<Criterion> criteria{
      {1, "parameter counts", c1_param_counts},
      {2, "rmse percent", c2_rmse},
      {3, "gradient check", c3_gradients},
      {4, "depth trend", c4_depth_trend},
      {5, "density trend", c5_density_trend},
      {6, "sensor mapping", c6_sensor_map},
      {7, "ndvi and biomass", c7_ndvi_biomass},
      {8, "defocus oracle", c8_defocus},
      {9, "in-focus consistency", c9_in_focus},
      {10, "round-trip io", c10_round_trips},
      {11, "determinism", c11_determinism},
      {12, "void filtering", c12_void_filtering},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (const auto& cr : criteria) {
    if (!selected.empty() && !selected.count(cr.id)) continue;
    Checks checks;
    const auto t0 = Clock::now();
    try {
      cr.run(checks, work);
    } catch (const std::exception& e) {
      checks.expect(false, std::string("exception: ") + e.what());
    }
    const bool ok = checks.passed();
    failed += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << cr.id << " (" << cr.name << ") [" << fmt(seconds_since(t0), 3)
              << " s] " << checks.summary() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
