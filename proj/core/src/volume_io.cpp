#include "understory/volume_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "binary_util.hpp"
#include "text_util.hpp"

namespace understory {
namespace fs = std::filesystem;

std::string to_string(VolumeKind kind) {
  switch (kind) {
    case VolumeKind::Reflectance: return "reflectance";
    case VolumeKind::Index: return "index";
    case VolumeKind::Mask: return "mask";
    case VolumeKind::Depth: return "depth";
    case VolumeKind::FocalSignal: return "focal";
    case VolumeKind::GroundTruth: return "truth";
  }
  return "unknown";
}

namespace {
constexpr std::string_view kVolumeMagic = "DFVL";
constexpr std::string_view kDatasetMagic = "DFPD";
constexpr std::uint16_t kVolumeVersion = 1;
constexpr std::uint16_t kDatasetVersion = 1;
constexpr std::uint32_t kMaxDim = 1u << 16;

void check_volume(const VolumeFile& v) {
  v.geometry.validate();
  require_input(v.values.size() == v.geometry.dims.count() && v.flags.size() == v.values.size(),
                "volume payload does not match dims " + to_string(v.geometry.dims));
  require_input(v.labels.empty() || v.labels.size() == static_cast<std::size_t>(v.geometry.dims.d),
                "volume labels must be empty or one per layer");
}
}  // namespace

std::vector<std::uint8_t> encode_volume(const VolumeFile& v) {
  check_volume(v);
  const StackGeometry& g = v.geometry;
  bin::Writer w;
  w.tag(kVolumeMagic);
  w.u16(kVolumeVersion);
  w.u32(bin::kEndianTag);
  w.u8(static_cast<std::uint8_t>(v.kind));
  w.u32(static_cast<std::uint32_t>(g.dims.w));
  w.u32(static_cast<std::uint32_t>(g.dims.h));
  w.u32(static_cast<std::uint32_t>(g.dims.d));
  w.f64(g.extent);
  w.f64(g.extent_y);
  w.f64(g.origin_x);
  w.f64(g.origin_y);
  for (double h : g.heights) w.f64(h);
  for (float x : v.values) w.f32(x);
  w.bytes(v.flags.data(), v.flags.size());
  w.u32(static_cast<std::uint32_t>(v.labels.size()));
  for (const auto& s : v.labels) w.str(s);
  w.crc();
  return w.take();
}

VolumeFile decode_volume(const std::vector<std::uint8_t>& bytes) {
  bin::Reader r(bytes, "volume file");
  r.open(kVolumeMagic, kVolumeVersion);
  r.expect_endian_tag();
  VolumeFile v;
  const std::uint8_t kind = r.u8();
  require(kind <= static_cast<std::uint8_t>(VolumeKind::GroundTruth), ErrorKind::Format, "volume file: unknown kind");
  v.kind = static_cast<VolumeKind>(kind);
  const std::uint32_t w = r.u32(), h = r.u32(), d = r.u32();
  require(w >= 1 && h >= 1 && d >= 1 && w <= kMaxDim && h <= kMaxDim && d <= kMaxDim, ErrorKind::Format,
          "volume file: implausible dims");
  StackGeometry& g = v.geometry;
  g.dims = Dims3{static_cast<int>(w), static_cast<int>(h), static_cast<int>(d)};
  g.extent = r.f64();
  g.extent_y = r.f64();
  g.origin_x = r.f64();
  g.origin_y = r.f64();
  g.heights.resize(d);
  for (auto& x : g.heights) x = r.f64();
  const std::size_t n = g.dims.count();
  r.need(n * 5);
  v.values.resize(n);
  for (auto& x : v.values) x = r.f32();
  v.flags.resize(n);
  for (auto& f : v.flags) f = r.u8();
  const std::uint32_t nl = r.u32();
  require(nl == 0 || nl == d, ErrorKind::Format, "volume file: label count does not match layers");
  for (std::uint32_t i = 0; i < nl; ++i) v.labels.push_back(r.str());
  require(r.at_end(), ErrorKind::Format, "volume file: trailing bytes after payload");
  try {
    check_volume(v);
  } catch (const Error& e) {
    fail(ErrorKind::Format, std::string("volume file: ") + e.what());
  }
  return v;
}

void write_volume(const std::string& path, const VolumeFile& volume) { bin::write_file(path, encode_volume(volume)); }
VolumeFile read_volume(const std::string& path) { return decode_volume(bin::read_file(path)); }

VolumeFile to_volume(const FocalStack& stack) {
  VolumeFile v;
  v.kind = VolumeKind::FocalSignal;
  v.geometry = stack.geometry;
  v.values = stack.values;
  v.flags = stack.valid;
  return v;
}

VolumeFile to_volume(const ReflectanceStack& stack) {
  VolumeFile v;
  v.kind = VolumeKind::Reflectance;
  v.geometry = stack.geometry;
  v.values = stack.values;
  v.flags.assign(stack.values.size(), 1);
  v.labels = stack.provenance;
  return v;
}

VolumeFile to_volume(const IndexStack& stack) {
  VolumeFile v;
  v.kind = VolumeKind::Index;
  v.geometry = stack.geometry;
  v.values = stack.values;
  v.flags.resize(stack.values.size());
  for (std::size_t i = 0; i < v.flags.size(); ++i) {
    const bool zs = !stack.zero_sum.empty() && stack.zero_sum[i];
    v.flags[i] = static_cast<std::uint8_t>((stack.mask[i] ? 1 : 0) | (zs ? 2 : 0));
  }
  return v;
}

VolumeFile to_volume(const GroundTruthVolume& truth) {
  VolumeFile v;
  v.kind = VolumeKind::GroundTruth;
  v.geometry = truth.stack_geometry();
  v.values = truth.reflectance;
  v.flags = truth.occupied;
  return v;
}

VolumeFile to_volume(const DepthMap& depth, const StackGeometry& geometry) {
  require_input(depth.w == geometry.dims.w && depth.h == geometry.dims.h, "depth map does not match the geometry");
  VolumeFile v;
  v.kind = VolumeKind::Depth;
  v.geometry = geometry;
  v.geometry.dims.d = 1;
  v.geometry.heights = {geometry.heights.back()};
  v.values.resize(depth.z.size());
  v.flags.resize(depth.z.size());
  for (std::size_t i = 0; i < depth.z.size(); ++i) {
    v.values[i] = static_cast<float>(depth.z[i]);
    v.flags[i] = depth.z[i] == DepthMap::kGap ? 0 : 1;
  }
  return v;
}

namespace {
void expect_kind(const VolumeFile& v, VolumeKind k) {
  require(v.kind == k, ErrorKind::Format, "expected a " + to_string(k) + " volume, got " + to_string(v.kind));
}
}  // namespace

FocalStack as_focal_stack(const VolumeFile& v) {
  expect_kind(v, VolumeKind::FocalSignal);
  return FocalStack{v.geometry, v.values, v.flags};
}

ReflectanceStack as_reflectance_stack(const VolumeFile& v) {
  expect_kind(v, VolumeKind::Reflectance);
  ReflectanceStack s;
  s.geometry = v.geometry;
  s.values = v.values;
  s.provenance = v.labels;
  if (s.provenance.empty()) s.provenance.assign(static_cast<std::size_t>(v.geometry.dims.d), "");
  return s;
}

IndexStack as_index_stack(const VolumeFile& v) {
  expect_kind(v, VolumeKind::Index);
  IndexStack s;
  s.geometry = v.geometry;
  s.values = v.values;
  s.mask.resize(v.flags.size());
  s.zero_sum.resize(v.flags.size());
  for (std::size_t i = 0; i < v.flags.size(); ++i) {
    s.mask[i] = v.flags[i] & 1;
    s.zero_sum[i] = (v.flags[i] >> 1) & 1;
  }
  return s;
}

GroundTruthVolume as_ground_truth(const VolumeFile& v) {
  expect_kind(v, VolumeKind::GroundTruth);
  require(v.geometry.plot_aligned(), ErrorKind::Format, "ground truth volume must be plot aligned");
  GroundTruthVolume t;
  t.dims = v.geometry.dims;
  t.extent_xy = v.geometry.extent;
  t.z_top = v.geometry.heights.back();
  t.reflectance = v.values;
  t.occupied = v.flags;
  for (auto& f : t.occupied) f &= 1;
  return t;
}

DepthMap as_depth_map(const VolumeFile& v) {
  expect_kind(v, VolumeKind::Depth);
  DepthMap d(v.geometry.dims.w, v.geometry.dims.h);
  for (std::size_t i = 0; i < d.z.size(); ++i) d.z[i] = v.flags[i] ? static_cast<int>(v.values[i]) : DepthMap::kGap;
  return d;
}

// ---- graymaps ------------------------------------------------------------------

std::uint16_t quantize16(float v) {
  require_input(v >= 0.0f && v <= 1.0f, "layer value " + text::num(v) + " outside [0, 1]");
  return static_cast<std::uint16_t>(std::lround(static_cast<double>(v) * 65535.0));
}

float dequantize16(std::uint16_t q) { return static_cast<float>(q / 65535.0); }

void write_pgm(const std::string& path, const Graymap& image) {
  require_input(image.width > 0 && image.height > 0 && image.maxval >= 1 && image.maxval <= 65535,
                "graymap header is invalid");
  require_input(image.samples.size() == static_cast<std::size_t>(image.width) * image.height,
                "graymap sample count does not match its size");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot create '" + path + "'");
  out << "P5\n" << image.width << ' ' << image.height << '\n' << image.maxval << '\n';
  std::vector<char> buf;
  buf.reserve(image.samples.size() * 2);
  for (std::uint16_t s : image.samples) {
    if (image.maxval > 255) buf.push_back(static_cast<char>(s >> 8));
    buf.push_back(static_cast<char>(s & 0xFF));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for '" + path + "'");
}

Graymap read_pgm(const std::string& path) {
  const auto bytes = bin::read_file(path);
  std::size_t pos = 0;
  auto fail_fmt = [&](const std::string& m) { fail(ErrorKind::Format, "'" + path + "': " + m); };
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_ws();
    long v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && pos - start < 9) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) fail_fmt("malformed graymap header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail_fmt("not a binary graymap (P5)");
  pos = 2;
  Graymap g;
  g.width = static_cast<int>(number());
  g.height = static_cast<int>(number());
  g.maxval = static_cast<int>(number());
  if (g.width <= 0 || g.height <= 0 || g.maxval <= 0 || g.maxval > 65535) fail_fmt("invalid graymap header values");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail_fmt("malformed graymap header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(g.width) * g.height;
  const std::size_t bps = g.maxval > 255 ? 2 : 1;
  if (bytes.size() - pos < n * bps) fail_fmt("pixel data is short (" + std::to_string(bytes.size() - pos) + " of " +
                                             std::to_string(n * bps) + " bytes)");
  g.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.samples[i] = bps == 2 ? static_cast<std::uint16_t>((bytes[pos] << 8) | bytes[pos + 1]) : bytes[pos];
    pos += bps;
    if (g.samples[i] > g.maxval) fail_fmt("sample exceeds maxval");
  }
  return g;
}

Image read_image(const std::string& path) {
  const Graymap g = read_pgm(path);
  Image img(g.width, g.height);
  for (std::size_t i = 0; i < g.samples.size(); ++i) {
    img.pixels[i] = static_cast<float>(static_cast<double>(g.samples[i]) / g.maxval);
  }
  return img;
}

void write_image16(const std::string& path, const Image& image) {
  Graymap g{image.width, image.height, 65535, {}};
  g.samples.resize(image.pixels.size());
  for (std::size_t i = 0; i < image.pixels.size(); ++i) g.samples[i] = quantize16(std::clamp(image.pixels[i], 0.0f, 1.0f));
  write_pgm(path, g);
}

namespace {
std::string layer_path(const std::string& dir, int k) {
  std::string digits = std::to_string(k);
  while (digits.size() < 4) digits.insert(digits.begin(), '0');
  return (fs::path(dir) / ("layer_" + digits + ".pgm")).string();
}
}  // namespace

std::vector<std::string> write_layers(const std::string& directory, const Dims3& dims, std::span<const float> values,
                                      std::optional<float> sentinel_remap) {
  require_input(values.size() == dims.count(), "layer values do not match dims " + to_string(dims));
  for (float v : values) {
    if (v == IndexStack::kSentinel && !sentinel_remap) {
      fail(ErrorKind::InvalidInput, "stack contains the above-canopy sentinel; supply a remap value for layer export");
    }
  }
  if (sentinel_remap) quantize16(*sentinel_remap);
  fs::create_directories(directory);
  std::vector<std::string> paths;
  for (int z = 0; z < dims.d; ++z) {
    Graymap g{dims.w, dims.h, 65535, {}};
    g.samples.resize(dims.layer_count());
    for (int y = 0; y < dims.h; ++y) {
      for (int x = 0; x < dims.w; ++x) {
        float v = values[dims.index(x, y, z)];
        if (v == IndexStack::kSentinel) v = *sentinel_remap;
        g.samples[static_cast<std::size_t>(dims.h - 1 - y) * dims.w + x] = quantize16(v);
      }
    }
    paths.push_back(layer_path(directory, z));
    write_pgm(paths.back(), g);
  }
  return paths;
}

LayerImages read_layers(const std::string& directory, int expected_layers) {
  LayerImages out;
  for (int z = 0;; ++z) {
    const std::string p = layer_path(directory, z);
    if (expected_layers > 0 && z >= expected_layers) break;
    if (!fs::exists(p)) {
      if (expected_layers > 0) fail(ErrorKind::Io, "layer " + std::to_string(z) + ": missing file '" + p + "'");
      break;
    }
    Graymap g;
    try {
      g = read_pgm(p);
    } catch (const Error& e) {
      fail(e.kind(), "layer " + std::to_string(z) + ": " + e.what());
    }
    if (z == 0) {
      out.dims = Dims3{g.width, g.height, 0};
    } else if (g.width != out.dims.w || g.height != out.dims.h) {
      fail(ErrorKind::ImageShape, "layer " + std::to_string(z) + ": size differs from layer 0");
    }
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        const std::uint16_t q = g.samples[static_cast<std::size_t>(g.height - 1 - y) * g.width + x];
        out.values.push_back(static_cast<float>(static_cast<double>(q) / g.maxval));
      }
    }
    ++out.dims.d;
  }
  require(out.dims.d > 0, ErrorKind::Io, "no layer images in '" + directory + "'");
  return out;
}

// ---- datasets -----------------------------------------------------------------

std::vector<std::uint8_t> encode_dataset(const PatchDataset& ds) {
  const std::size_t P = ds.dims.count();
  const std::size_t n = ds.size();
  require_input(ds.inputs.size() == n * P && ds.is_void.size() == n && ds.split.size() == n && ds.plot.size() == n &&
                    ds.x.size() == n && ds.y.size() == n,
                "dataset columns disagree in length");
  bin::Writer w;
  w.tag(kDatasetMagic);
  w.u16(kDatasetVersion);
  w.u32(bin::kEndianTag);
  w.u32(static_cast<std::uint32_t>(ds.dims.w));
  w.u32(static_cast<std::uint32_t>(ds.dims.h));
  w.u32(static_cast<std::uint32_t>(ds.dims.d));
  w.u32(static_cast<std::uint32_t>(ds.layer));
  w.u64(n);
  w.u64(ds.count(Split::Train));
  w.u64(ds.count(Split::Val));
  w.u64(ds.count(Split::Test));
  w.u64(ds.void_count());
  for (std::size_t i = 0; i < n; ++i) {
    for (float v : ds.input(i)) w.f32(v);
    w.f32(ds.is_void[i] ? std::numeric_limits<float>::quiet_NaN() : ds.targets[i]);
    w.u8(ds.is_void[i]);
    w.u8(static_cast<std::uint8_t>(ds.split[i]));
    w.u32(ds.plot[i]);
    w.u16(ds.x[i]);
    w.u16(ds.y[i]);
  }
  w.crc();
  return w.take();
}

PatchDataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  bin::Reader r(bytes, "dataset file");
  r.open(kDatasetMagic, kDatasetVersion);
  r.expect_endian_tag();
  PatchDataset ds;
  const std::uint32_t pw = r.u32(), ph = r.u32(), pdd = r.u32();
  require(pw >= 1 && ph >= 1 && pdd >= 1 && pw <= 4096 && ph <= 4096 && pdd <= 4096, ErrorKind::Format,
          "dataset file: implausible patch dims");
  ds.dims = PatchDims{static_cast<int>(pw), static_cast<int>(ph), static_cast<int>(pdd)};
  ds.layer = static_cast<int>(r.u32());
  const std::uint64_t n = r.u64();
  const std::uint64_t n_train = r.u64(), n_val = r.u64(), n_test = r.u64(), n_void = r.u64();
  const std::size_t P = ds.dims.count();
  const std::size_t rec = P * 4 + 4 + 1 + 1 + 4 + 2 + 2;
  require(r.remaining() == n * rec, ErrorKind::Format, "dataset file: payload length does not match the patch count");
  std::vector<float> tensor(P);
  for (std::uint64_t i = 0; i < n; ++i) {
    for (auto& v : tensor) v = r.f32();
    const float target = r.f32();
    const std::uint8_t is_void = r.u8();
    const std::uint8_t split = r.u8();
    require(is_void <= 1 && split <= 2, ErrorKind::Format, "dataset file: invalid flag byte");
    require(is_void == (std::isnan(target) ? 1 : 0), ErrorKind::Format, "dataset file: void flag and target disagree");
    const std::uint32_t plot = r.u32();
    const int x = r.u16(), y = r.u16();
    ds.append(tensor, target, is_void != 0, static_cast<Split>(split), plot, x, y);
  }
  require(ds.count(Split::Train) == n_train && ds.count(Split::Val) == n_val && ds.count(Split::Test) == n_test &&
              ds.void_count() == n_void,
          ErrorKind::Format, "dataset file: header counts do not match the records");
  return ds;
}

void write_dataset(const std::string& path, const PatchDataset& dataset) {
  bin::write_file(path, encode_dataset(dataset));
}
PatchDataset read_dataset(const std::string& path) { return decode_dataset(bin::read_file(path)); }

// ---- point clouds and manifests --------------------------------------------------

std::vector<Eigen::Vector3d> read_point_cloud(std::istream& in) {
  std::vector<Eigen::Vector3d> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto tok = text::split_ws(line);
    if (tok.empty()) continue;
    require(tok.size() == 3, ErrorKind::Format, "point cloud line " + std::to_string(lineno) + ": expected 'x y z'");
    pts.emplace_back(text::parse<double>(tok[0], "x"), text::parse<double>(tok[1], "y"), text::parse<double>(tok[2], "z"));
  }
  return pts;
}

void write_point_cloud(std::ostream& out, std::span<const Eigen::Vector3d> points) {
  for (const auto& p : points) out << text::num(p.x()) << ' ' << text::num(p.y()) << ' ' << text::num(p.z()) << '\n';
}

Manifest read_manifest(std::istream& in) {
  Manifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    require(eq != std::string_view::npos, ErrorKind::Format,
            "manifest line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key(text::trim(body.substr(0, eq)));
    const std::string value(text::trim(body.substr(eq + 1)));
    require(!key.empty(), ErrorKind::Format, "manifest line " + std::to_string(lineno) + ": empty key");
    for (const auto& kv : m) {
      require(kv.first != key, ErrorKind::Format, "manifest line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    m.emplace_back(key, value);
  }
  return m;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open manifest '" + path + "'");
  return read_manifest(in);
}

void write_manifest(std::ostream& out, const Manifest& manifest) {
  for (const auto& [k, v] : manifest) out << k << " = " << v << '\n';
}

}  // namespace understory
