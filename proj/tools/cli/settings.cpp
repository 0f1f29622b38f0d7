#include "cli/settings.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace understory::cli {
namespace {

struct Default {
  const char* key;
  const char* desk;
  const char* paper;  // nullptr: same as desk
};

// clang-format off
const Default kDefaults[] = {
  {"seed", "7", nullptr},
  {"density", "220", nullptr},
  {"workers", "1", nullptr},
  {"plot_side", "30", nullptr},
  {"volume_dims", "64 64 32", "440 440 440"},
  {"z_top", "20", nullptr},
  {"aperture_side", "24", nullptr},
  {"pose_spacing", "6", "3"},
  {"altitude", "35", nullptr},
  {"image_size", "256", "440"},
  {"fov_deg", "50", nullptr},
  {"patch_dims", "2 2 8", "2 2 20"},
  {"channels", "4 4 8 8 16 16 32 32", "32 32 64 64 128 128 256 256"},
  {"hidden", "128 64", nullptr},
  {"batch_size", "64", "256"},
  {"epochs", "8", "20"},
  {"learning_rate", "0.001", nullptr},
  {"beta1", "0.9", nullptr},
  {"beta2", "0.999", nullptr},
  {"epsilon", "1e-08", nullptr},
  {"max_train_patches", "4000", "0"},
  {"patience", "0", nullptr},
  {"chunk", "64", nullptr},
  {"val_fraction", "0.15", nullptr},
  {"test_fraction", "0.15", nullptr},
  {"split_seed", "0", nullptr},
  {"train_seed", "0", nullptr},
  {"include_void", "false", nullptr},
  {"identity_if_worse", "true", nullptr},
  {"selection_z", "2", nullptr},
  {"layer", "0", nullptr},
  {"out_dir", ".", nullptr},
  {"scene", "scene.txt", nullptr},
  {"truth", "truth.dfvl", nullptr},
  {"scan_dir", "scan", nullptr},
  {"stack", "stack.dfvl", nullptr},
  {"stacks", "", nullptr},
  {"truths", "", nullptr},
  {"dataset", "dataset.dfpd", nullptr},
  {"models_dir", "models", nullptr},
  {"reflectance", "reflectance.dfvl", nullptr},
  {"top_layer", "", nullptr},
  {"mapped", "mapped.dfvl", nullptr},
  {"nir", "", nullptr},
  {"red", "", nullptr},
  {"index", "index.dfvl", nullptr},
  {"filtered", "filtered.dfvl", nullptr},
  {"ndvi_range", "-1 1", nullptr},
  {"crop", "", nullptr},
  {"biomass_threshold", "0.33", nullptr},
  {"biomass_report", "biomass.csv", nullptr},
  {"input", "", nullptr},
  {"vti", "", nullptr},
  {"layers_dir", "", nullptr},
  {"sentinel_remap", "", nullptr},
  {"report", "report.csv", nullptr},
  {"sweep_densities", "150 225 300", nullptr},
  {"sweep_seeds", "1 2 3", nullptr},
  {"sweep_train_plots", "3", nullptr},
  {"sweep_correct", "true", nullptr},
  {"sweep_report", "sweep.csv", nullptr},
};
// clang-format on

std::vector<std::string> tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

template <typename T>
T parse_token(const std::string& key, const std::string& tok) {
  T v{};
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
    throw UsageError("manifest key '" + key + "': cannot parse '" + tok + "'");
  }
  return v;
}

}  // namespace

Settings Settings::defaults(bool paper_scale) {
  Settings s;
  for (const auto& d : kDefaults) {
    s.order_.push_back(d.key);
    s.values_[d.key] = (paper_scale && d.paper) ? d.paper : d.desk;
  }
  return s;
}

bool Settings::known(const std::string& key) const { return values_.count(key) != 0; }

void Settings::set(const std::string& key, const std::string& value) {
  if (!known(key)) throw UsageError("unknown manifest key '" + key + "'");
  values_[key] = value;
}

void Settings::apply(const Manifest& manifest) {
  for (const auto& [k, v] : manifest) set(k, v);
}

const std::string& Settings::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown manifest key '" + key + "'");
  return it->second;
}

double Settings::num(const std::string& key) const {
  const auto t = tokens(str(key));
  if (t.size() != 1) throw UsageError("manifest key '" + key + "' needs one number");
  return parse_token<double>(key, t[0]);
}

long Settings::integer(const std::string& key) const {
  const auto t = tokens(str(key));
  if (t.size() != 1) throw UsageError("manifest key '" + key + "' needs one integer");
  return parse_token<long>(key, t[0]);
}

std::uint64_t Settings::seed(const std::string& key) const {
  const auto t = tokens(str(key));
  if (t.size() != 1) throw UsageError("manifest key '" + key + "' needs one seed");
  return parse_token<std::uint64_t>(key, t[0]);
}

bool Settings::flag(const std::string& key) const {
  const std::string& v = str(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("manifest key '" + key + "' needs true or false");
}

std::vector<double> Settings::nums(const std::string& key) const {
  std::vector<double> out;
  for (const auto& t : tokens(str(key))) out.push_back(parse_token<double>(key, t));
  return out;
}

std::vector<long> Settings::integers(const std::string& key) const {
  std::vector<long> out;
  for (const auto& t : tokens(str(key))) out.push_back(parse_token<long>(key, t));
  return out;
}

std::vector<std::string> Settings::words(const std::string& key) const { return tokens(str(key)); }

std::string Settings::path(const std::string& key) const {
  const std::string& v = str(key);
  if (v.empty()) return v;
  const std::filesystem::path p(v);
  if (p.is_absolute() || key == "out_dir") return v;
  return (std::filesystem::path(str("out_dir")) / p).string();
}

std::vector<std::string> Settings::paths(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& w : words(key)) {
    const std::filesystem::path p(w);
    out.push_back(p.is_absolute() ? w : (std::filesystem::path(str("out_dir")) / p).string());
  }
  return out;
}

PipelineConfig Settings::pipeline() const {
  PipelineConfig c = PipelineConfig::desk();
  c.forest.plot_side = num("plot_side");
  c.forest.density = num("density");
  c.forest.seed = seed("seed");
  const auto vd = integers("volume_dims");
  if (vd.size() != 3) throw UsageError("volume_dims needs three integers");
  c.dims = Dims3{static_cast<int>(vd[0]), static_cast<int>(vd[1]), static_cast<int>(vd[2])};
  c.z_top = num("z_top");
  c.aperture_side = num("aperture_side");
  c.pose_spacing = num("pose_spacing");
  c.altitude = num("altitude");
  c.camera.image_size = static_cast<int>(integer("image_size"));
  c.camera.fov_deg = num("fov_deg");
  const auto pd = integers("patch_dims");
  if (pd.size() != 3) throw UsageError("patch_dims needs three integers");
  c.net.input = PatchDims{static_cast<int>(pd[0]), static_cast<int>(pd[1]), static_cast<int>(pd[2])};
  c.net.channels.clear();
  for (long v : integers("channels")) c.net.channels.push_back(static_cast<int>(v));
  c.net.hidden.clear();
  for (long v : integers("hidden")) c.net.hidden.push_back(static_cast<int>(v));
  c.dataset.dims = c.net.input;
  c.dataset.include_void = flag("include_void");
  c.dataset.val_fraction = num("val_fraction");
  c.dataset.test_fraction = num("test_fraction");
  c.dataset.split_seed = seed("split_seed");
  c.train.adam.learning_rate = num("learning_rate");
  c.train.adam.beta1 = num("beta1");
  c.train.adam.beta2 = num("beta2");
  c.train.adam.epsilon = num("epsilon");
  const long bs = integer("batch_size"), ep = integer("epochs"), mx = integer("max_train_patches"),
             ch = integer("chunk"), pa = integer("patience"), wk = integer("workers");
  if (bs < 1 || ep < 1 || mx < 0 || ch < 1 || pa < 0 || wk < 1) {
    throw UsageError("batch_size, epochs, chunk and workers must be positive; max_train_patches and patience non-negative");
  }
  c.train.batch_size = static_cast<std::size_t>(bs);
  c.train.epochs = static_cast<int>(ep);
  c.train.max_train_patches = static_cast<std::size_t>(mx);
  c.train.chunk = static_cast<std::size_t>(ch);
  c.train.patience = static_cast<int>(pa);
  c.train.seed = seed("train_seed");
  c.identity_if_worse = flag("identity_if_worse");
  c.selection_z = num("selection_z");
  if (!std::isfinite(c.selection_z)) throw UsageError("selection_z must be finite");
  c.workers = static_cast<int>(wk);
  c.train.workers = c.workers;
  c.dataset.workers = c.workers;
  return c;
}

StackGeometry Settings::stack_geometry() const {
  const PipelineConfig c = pipeline();
  StackGeometry g;
  g.dims = c.dims;
  g.extent = c.forest.plot_side;
  g.heights.resize(static_cast<std::size_t>(c.dims.d));
  const double pitch = c.z_top / c.dims.d;  // same arithmetic as GroundTruthVolume::stack_geometry
  for (int k = 0; k < c.dims.d; ++k) g.heights[static_cast<std::size_t>(k)] = (k + 1) * pitch;
  return g;
}

Manifest Settings::resolved() const {
  Manifest m;
  for (const auto& k : order_) m.emplace_back(k, values_.at(k));
  return m;
}

}  // namespace understory::cli
