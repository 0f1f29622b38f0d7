#include "cli/commands.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "understory/model_io.hpp"
#include "understory/pipeline.hpp"
#include "understory/scene_sim.hpp"
#include "understory/spectral.hpp"
#include "understory/volume_io.hpp"

namespace understory::cli {
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::ofstream open_out(const std::string& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot create '" + path + "'");
  return out;
}

std::string numbered(const std::string& dir, const char* prefix, int k, const char* ext) {
  std::string digits = std::to_string(k);
  while (digits.size() < 4) digits.insert(digits.begin(), '0');
  return (fs::path(dir) / (std::string(prefix) + digits + ext)).string();
}

void save_volume(const std::string& path, const VolumeFile& v, std::ostream& log, const char* what) {
  ensure_parent(path);
  write_volume(path, v);
  log << "wrote=" << what << " path=" << path << " dims=" << to_string(v.geometry.dims) << '\n';
}

std::vector<std::string> list_or(const Settings& s, const std::string& list_key, const std::string& single_key) {
  auto v = s.paths(list_key);
  if (v.empty()) v.push_back(s.path(single_key));
  return v;
}

DepthMap load_top_layer(const Settings& s, const StackGeometry& geometry, std::ostream& log) {
  const std::string p = s.str("top_layer").empty() ? s.path("truth") : s.path("top_layer");
  if (fs::path(p).extension() == ".dfvl") {
    const VolumeFile v = read_volume(p);
    if (v.kind == VolumeKind::GroundTruth) return extract_top_layer(as_ground_truth(v));
    return as_depth_map(v);
  }
  std::ifstream in(p);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open point cloud '" + p + "'");
  const auto pts = read_point_cloud(in);
  const auto res = ingest_top_layer_pointcloud(pts, geometry);
  log << "point_cloud=" << p << " points=" << pts.size() << " dropped=" << res.dropped << '\n';
  return res.depth;
}

std::vector<LayerModel<float>> load_models(const std::string& dir, int layers) {
  std::vector<LayerModel<float>> models;
  for (int k = 0; k < layers; ++k) {
    const std::string p = numbered(dir, "layer_", k, ".dfrm");
    require(fs::exists(p), ErrorKind::Io, "missing model for layer " + std::to_string(k) + ": '" + p + "'");
    models.push_back(load_model(p));
  }
  return models;
}

// ---- subcommands ---------------------------------------------------------------

void cmd_simulate(const Settings& s, std::ostream& log) {
  const PipelineConfig c = s.pipeline();
  c.validate();
  const ForestScene scene = generate_forest(c.forest);
  const GroundTruthVolume truth = voxelize(scene, c.dims, c.z_top);
  {
    auto out = open_out(s.path("scene"));
    write_scene(out, scene);
  }
  log << "wrote=scene path=" << s.path("scene") << " trees=" << scene.trees.size() << " leaves=" << scene.leaf_count()
      << '\n';
  save_volume(s.path("truth"), to_volume(truth), log, "truth");
  log << "occupied=" << truth.occupied_count() << '\n';
}

void cmd_scan(const Settings& s, std::ostream& log) {
  const PipelineConfig c = s.pipeline();
  c.validate();
  const GroundTruthVolume truth = as_ground_truth(read_volume(s.path("truth")));
  const ApertureSquare sq = c.aperture();
  const auto poses = plan_grid(sq.side, c.pose_spacing, sq.altitude, sq.center_x, sq.center_y);
  const ApertureScan scan = render_scan(truth, poses, c.camera, 0.0f, c.workers);
  write_scan(s.path("scan_dir"), scan);
  log << "wrote=scan path=" << s.path("scan_dir") << " images=" << scan.images.size()
      << " image_size=" << scan.intrinsics.image_size << '\n';
}

void cmd_focal_stack(const Settings& s, std::ostream& log) {
  const PipelineConfig c = s.pipeline();
  const ApertureScan scan = read_scan(s.path("scan_dir"));
  const FocalStack stack = build_focal_stack(scan, s.stack_geometry(), c.workers);
  save_volume(s.path("stack"), to_volume(stack), log, "stack");
}

std::vector<PlotData> load_plots(const Settings& s, const PipelineConfig& c, std::vector<FocalStack>& stacks,
                                 std::vector<GroundTruthVolume>& truths) {
  const auto sp = list_or(s, "stacks", "stack");
  const auto tp = list_or(s, "truths", "truth");
  require(sp.size() == tp.size(), ErrorKind::CountMismatch,
          std::to_string(sp.size()) + " stacks listed for " + std::to_string(tp.size()) + " truths");
  for (std::size_t i = 0; i < sp.size(); ++i) {
    stacks.push_back(as_focal_stack(read_volume(sp[i])));
    truths.push_back(as_ground_truth(read_volume(tp[i])));
  }
  std::vector<PlotData> plots;
  for (std::size_t i = 0; i < sp.size(); ++i) plots.push_back(PlotData{&stacks[i], &truths[i], c.aperture()});
  return plots;
}

void cmd_dataset(const Settings& s, std::ostream& log) {
  const PipelineConfig c = s.pipeline();
  c.validate();
  std::vector<FocalStack> stacks;
  std::vector<GroundTruthVolume> truths;
  const auto plots = load_plots(s, c, stacks, truths);
  const PatchDataset ds = build_dataset(plots, static_cast<int>(s.integer("layer")), c.dataset);
  ensure_parent(s.path("dataset"));
  write_dataset(s.path("dataset"), ds);
  log << "wrote=dataset path=" << s.path("dataset") << " patches=" << ds.size() << " train=" << ds.count(Split::Train)
      << " val=" << ds.count(Split::Val) << " test=" << ds.count(Split::Test) << " void=" << ds.void_count() << '\n';
}

void cmd_train(const Settings& s, std::ostream& log) {
  const PipelineConfig c = s.pipeline();
  c.validate();
  std::vector<FocalStack> stacks;
  std::vector<GroundTruthVolume> truths;
  const auto plots = load_plots(s, c, stacks, truths);
  const auto results = train_all_layers(plots, c.net, c.dataset, c.train, SelectionOptions{c.identity_if_worse, c.selection_z}, &log);
  const std::string dir = s.path("models_dir");
  fs::create_directories(dir);
  auto summary = open_out((fs::path(dir) / "training.csv").string());
  summary << "layer,model_id,train_patches,val_mse,val_identity_mse,fallback\n";
  for (std::size_t k = 0; k < results.size(); ++k) {
    const LayerResult& r = results[k];
    save_model(numbered(dir, "layer_", static_cast<int>(k), ".dfrm"), r.model);
    if (!r.history.empty()) {
      auto out = open_out(numbered(dir, "loss_", static_cast<int>(k), ".csv"));
      write_loss_csv(out, r.history);
    }
    summary << k << ',' << r.model.id << ',' << r.train_patches << ',' << fmt(r.val_mse) << ','
            << fmt(r.val_identity_mse) << ',' << (r.fallback ? 1 : 0) << '\n';
  }
  log << "wrote=models path=" << dir << " layers=" << results.size() << '\n';
}

void cmd_correct(const Settings& s, std::ostream& log) {
  const PipelineConfig c = s.pipeline();
  const FocalStack stack = as_focal_stack(read_volume(s.path("stack")));
  const auto models = load_models(s.path("models_dir"), stack.geometry.dims.d);
  const ReflectanceStack rs = correct_stack(stack, models, c.aperture(), c.workers);
  save_volume(s.path("reflectance"), to_volume(rs), log, "reflectance");
}

void cmd_evaluate(const Settings& s, std::ostream& log) {
  const FocalStack stack = as_focal_stack(read_volume(s.path("stack")));
  const GroundTruthVolume truth = as_ground_truth(read_volume(s.path("truth")));
  std::optional<ReflectanceStack> rs;
  const std::string rp = s.path("reflectance");
  if (!rp.empty() && fs::exists(rp)) rs = as_reflectance_stack(read_volume(rp));
  const EvalReport rep = evaluate(stack, rs ? &*rs : nullptr, truth, s.num("density"));
  {
    auto out = open_out(s.path("report"));
    write_eval_csv(out, rep);
  }
  log << "wrote=report path=" << s.path("report") << " canopy_top_layer=" << rep.canopy_top_layer
      << " corrected=" << (rs ? 1 : 0);
  if (rep.below_canopy().size() >= 2) {
    log << " deepest_quartile_improvement=" << fmt(rep.deepest_quartile_improvement())
        << " fraction_not_worse=" << fmt(rep.fraction_not_worse()) << " depth_spearman=" << fmt(rep.depth_mse_spearman());
  }
  log << '\n';
}

void cmd_map(const Settings& s, std::ostream& log) {
  const ReflectanceStack rs = as_reflectance_stack(read_volume(s.path("reflectance")));
  const DepthMap top = load_top_layer(s, rs.geometry, log);
  const ApertureScan scan = read_scan(s.path("scan_dir"));
  const std::size_t ci = scan.center_pose_index();
  const MappedStack m = sensor_map(rs, top, scan.images[ci], scan.poses[ci], scan.intrinsics);
  ReflectanceStack out = rs;
  for (std::size_t i = 0; i < m.values.size(); ++i) out.values[i] = static_cast<float>(m.values[i]);
  save_volume(s.path("mapped"), to_volume(out), log, "mapped");
  log << "mu_c=" << fmt(m.stats.mu_c) << " sigma_c=" << fmt(m.stats.sigma_c) << " mu_r=" << fmt(m.stats.mu_r)
      << " sigma_r=" << fmt(m.stats.sigma_r) << " footprint=" << m.stats.footprint_count << '\n';
}

void cmd_index(const Settings& s, std::ostream& log) {
  require(!s.str("nir").empty() && !s.str("red").empty(), ErrorKind::InvalidInput, "index needs nir and red stacks");
  const ReflectanceStack nir = as_reflectance_stack(read_volume(s.path("nir")));
  const ReflectanceStack red = as_reflectance_stack(read_volume(s.path("red")));
  IndexStack idx = ndvi(nir, red);
  const DepthMap top = load_top_layer(s, idx.geometry, log);
  idx = remove_above_canopy(idx, top);
  save_volume(s.path("index"), to_volume(idx), log, "index");
}

void cmd_filter(const Settings& s, std::ostream& log) {
  IndexStack idx = as_index_stack(read_volume(s.path("index")));
  const auto box = s.integers("crop");
  if (!box.empty()) {
    require(box.size() == 6, ErrorKind::InvalidInput, "crop needs 'x0 y0 z0 x1 y1 z1'");
    idx = crop(idx, VoxelBox{static_cast<int>(box[0]), static_cast<int>(box[1]), static_cast<int>(box[2]),
                             static_cast<int>(box[3]), static_cast<int>(box[4]), static_cast<int>(box[5])});
  }
  const auto range = s.nums("ndvi_range");
  require(range.size() == 2, ErrorKind::InvalidInput, "ndvi_range needs 'lo hi'");
  const StackGeometry& g = idx.geometry;
  const double dz = g.dims.d >= 2 ? (g.heights.back() - g.heights.front()) / (g.dims.d - 1) : g.heights.front();
  const BiomassResult b = biomass_fraction(idx, s.num("biomass_threshold"), g.cell_width() * g.cell_height() * dz);
  {
    auto out = open_out(s.path("biomass_report"));
    out << "threshold,kept_count,total_count,fraction,kept_volume,excluded_volume,total_volume\n"
        << fmt(s.num("biomass_threshold")) << ',' << b.kept_count << ',' << b.total_count << ',' << fmt(b.fraction) << ','
        << fmt(b.kept_volume) << ',' << fmt(b.excluded_volume) << ',' << fmt(b.total_volume) << '\n';
  }
  const IndexStack f = range_filter(idx, range[0], range[1]);
  save_volume(s.path("filtered"), to_volume(f), log, "filtered");
  log << "biomass_fraction=" << fmt(b.fraction) << " kept_volume=" << fmt(b.kept_volume)
      << " total_volume=" << fmt(b.total_volume) << '\n';
}

void cmd_export(const Settings& s, std::ostream& log) {
  require(!s.str("input").empty(), ErrorKind::InvalidInput, "export needs an input volume");
  require(!s.str("vti").empty() || !s.str("layers_dir").empty(), ErrorKind::InvalidInput,
          "export needs a vti path or a layers_dir");
  const VolumeFile v = read_volume(s.path("input"));
  if (!s.str("vti").empty()) {
    std::vector<float> opacity(v.flags.size());
    for (std::size_t i = 0; i < opacity.size(); ++i) opacity[i] = (v.flags[i] & 1) ? 1.0f : 0.0f;
    ensure_parent(s.path("vti"));
    write_vti(s.path("vti"), make_vti_color_opacity(v.geometry, v.values, opacity));
    log << "wrote=vti path=" << s.path("vti") << '\n';
  }
  if (!s.str("layers_dir").empty()) {
    std::optional<float> remap;
    if (!s.str("sentinel_remap").empty()) remap = static_cast<float>(s.num("sentinel_remap"));
    const auto paths = write_layers(s.path("layers_dir"), v.geometry.dims, v.values, remap);
    log << "wrote=layers path=" << s.path("layers_dir") << " count=" << paths.size() << '\n';
  }
}

void cmd_sweep(const Settings& s, std::ostream& log) {
  const PipelineConfig c = s.pipeline();
  SweepOptions o;
  o.densities = s.nums("sweep_densities");
  for (long v : s.integers("sweep_seeds")) {
    require(v >= 0, ErrorKind::InvalidInput, "sweep seeds must be non-negative");
    o.seeds.push_back(static_cast<std::uint64_t>(v));
  }
  o.train_plots = static_cast<int>(s.integer("sweep_train_plots"));
  o.correct = s.flag("sweep_correct");
  const auto rows = density_sweep(c, o, &log);
  auto out = open_out(s.path("sweep_report"));
  write_sweep_csv(out, rows);
  log << "wrote=sweep path=" << s.path("sweep_report") << " rows=" << rows.size() << '\n';
}

}  // namespace

const std::map<std::string, CommandInfo>& commands() {
  static const std::map<std::string, CommandInfo> table = {
      {"simulate", {cmd_simulate, "generate a forest plot: scene file and ground-truth volume"}},
      {"scan", {cmd_scan, "render the aerial image grid over a ground-truth volume"}},
      {"focal-stack", {cmd_focal_stack, "integrate a scan into a focal stack"}},
      {"dataset", {cmd_dataset, "extract the patch dataset of one stack layer"}},
      {"train", {cmd_train, "train one corrector per stack layer"}},
      {"correct", {cmd_correct, "apply layer models to a focal stack"}},
      {"map", {cmd_map, "match reflectance statistics to the centre camera image"}},
      {"index", {cmd_index, "NDVI stack from NIR and RED reflectance, masked above the canopy"}},
      {"filter", {cmd_filter, "crop, range-filter and measure biomass of an index stack"}},
      {"export", {cmd_export, "write a volume as VTK image data and/or 16-bit layer images"}},
      {"evaluate", {cmd_evaluate, "per-layer MSE report against ground truth"}},
      {"sweep", {cmd_sweep, "density sweep: simulate, train, correct and evaluate"}},
  };
  return table;
}

}  // namespace understory::cli
