#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "understory/volume_io.hpp"
#include "text_util.hpp"

namespace understory {

VtiVolume make_vti(const StackGeometry& geometry, std::vector<VtiArray> arrays) {
  geometry.validate();
  require_input(!arrays.empty() && arrays.size() <= 2, "a volume file carries one or two arrays");
  for (const auto& a : arrays) {
    require_input(a.values.size() == geometry.dims.count(),
                  "array '" + a.name + "' does not match dims " + to_string(geometry.dims));
    require_input(!a.name.empty() && a.name.find_first_of("\"<>&") == std::string::npos,
                  "array names must be non-empty plain text");
  }
  const auto& hs = geometry.heights;
  double dz = 1.0;
  if (hs.size() >= 2) {
    dz = (hs.back() - hs.front()) / static_cast<double>(hs.size() - 1);
    for (std::size_t k = 1; k < hs.size(); ++k) {
      require_input(std::abs((hs[k] - hs[k - 1]) - dz) <= 1e-9 * std::max(1.0, std::abs(dz)),
                    "image data needs uniformly spaced layers");
    }
  }
  VtiVolume v;
  v.dims = geometry.dims;
  v.spacing = Eigen::Vector3d(geometry.cell_width(), geometry.cell_height(), dz);
  v.origin = Eigen::Vector3d(geometry.center_x(0), geometry.center_y(0), hs.front());
  v.arrays = std::move(arrays);
  return v;
}

VtiVolume make_vti_color_opacity(const StackGeometry& geometry, std::span<const float> color,
                                 std::span<const float> opacity) {
  std::vector<VtiArray> arrays;
  arrays.push_back({"channels_and_opacity", std::vector<float>(color.begin(), color.end())});
  arrays.push_back({"opacity", std::vector<float>(opacity.begin(), opacity.end())});
  return make_vti(geometry, std::move(arrays));
}

void write_vti(std::ostream& out, const VtiVolume& v) {
  for (const auto& a : v.arrays) {
    require_input(a.values.size() == v.dims.count(), "array '" + a.name + "' does not match the volume dims");
  }
  const std::string extent = "0 " + std::to_string(v.dims.w - 1) + " 0 " + std::to_string(v.dims.h - 1) + " 0 " +
                             std::to_string(v.dims.d - 1);
  out << "<?xml version=\"1.0\"?>\n"
      << "<VTKFile type=\"ImageData\" version=\"0.1\" byte_order=\"LittleEndian\">\n"
      << "  <ImageData WholeExtent=\"" << extent << "\" Origin=\"" << text::num(v.origin.x()) << ' '
      << text::num(v.origin.y()) << ' ' << text::num(v.origin.z()) << "\" Spacing=\"" << text::num(v.spacing.x())
      << ' ' << text::num(v.spacing.y()) << ' ' << text::num(v.spacing.z()) << "\">\n"
      << "    <Piece Extent=\"" << extent << "\">\n"
      << "      <PointData" << (v.arrays.empty() ? "" : " Scalars=\"" + v.arrays.front().name + "\"") << ">\n";
  for (const auto& a : v.arrays) {
    out << "        <DataArray type=\"Float32\" Name=\"" << a.name << "\" NumberOfComponents=\"1\" format=\"ascii\">\n";
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      out << (i % 8 == 0 ? "          " : " ") << text::num(a.values[i]);
      if (i % 8 == 7 || i + 1 == a.values.size()) out << '\n';
    }
    out << "        </DataArray>\n";
  }
  out << "      </PointData>\n      <CellData>\n      </CellData>\n    </Piece>\n  </ImageData>\n</VTKFile>\n";
}

void write_vti(const std::string& path, const VtiVolume& volume) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot create '" + path + "'");
  write_vti(out, volume);
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for '" + path + "'");
}

namespace {

std::string attribute(std::string_view tag, std::string_view name) {
  const std::string key = " " + std::string(name) + "=\"";
  const auto p = tag.find(key);
  require(p != std::string_view::npos, ErrorKind::Format, "vti: missing attribute " + std::string(name));
  const auto b = p + key.size();
  const auto e = tag.find('"', b);
  require(e != std::string_view::npos, ErrorKind::Format, "vti: unterminated attribute " + std::string(name));
  return std::string(tag.substr(b, e - b));
}

std::string_view element(std::string_view doc, std::string_view name, std::size_t from, std::size_t* end) {
  const std::string open = "<" + std::string(name);
  const auto p = doc.find(open, from);
  if (p == std::string_view::npos) return {};
  const auto e = doc.find('>', p);
  require(e != std::string_view::npos, ErrorKind::Format, "vti: unterminated <" + std::string(name) + ">");
  *end = e + 1;
  return doc.substr(p, e + 1 - p);
}

template <typename T>
std::vector<T> numbers(std::string_view s, std::string_view what) {
  std::vector<T> out;
  for (auto tok : text::split_ws(s)) {
    // split_ws leaves newlines inside tokens; split those too
    std::size_t i = 0;
    while (i < tok.size()) {
      while (i < tok.size() && tok[i] == '\n') ++i;
      const std::size_t b = i;
      while (i < tok.size() && tok[i] != '\n') ++i;
      if (i > b) out.push_back(text::parse<T>(tok.substr(b, i - b), what));
    }
  }
  return out;
}

}  // namespace

VtiVolume read_vti(std::istream& in) {
  const std::string doc_s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string_view doc = doc_s;
  std::size_t pos = 0;
  const auto root = element(doc, "VTKFile", 0, &pos);
  require(!root.empty() && attribute(root, "type") == "ImageData", ErrorKind::Format, "vti: not an ImageData file");
  const auto img = element(doc, "ImageData", pos, &pos);
  require(!img.empty(), ErrorKind::Format, "vti: missing <ImageData>");
  const auto ext = numbers<int>(attribute(img, "WholeExtent"), "extent");
  const auto org = numbers<double>(attribute(img, "Origin"), "origin");
  const auto spc = numbers<double>(attribute(img, "Spacing"), "spacing");
  require(ext.size() == 6 && org.size() == 3 && spc.size() == 3, ErrorKind::Format, "vti: malformed header");
  VtiVolume v;
  v.dims = Dims3{ext[1] - ext[0] + 1, ext[3] - ext[2] + 1, ext[5] - ext[4] + 1};
  require(v.dims.w >= 1 && v.dims.h >= 1 && v.dims.d >= 1, ErrorKind::Format, "vti: empty extent");
  v.origin = Eigen::Vector3d(org[0], org[1], org[2]);
  v.spacing = Eigen::Vector3d(spc[0], spc[1], spc[2]);
  for (;;) {
    const auto tag = element(doc, "DataArray", pos, &pos);
    if (tag.empty()) break;
    require(attribute(tag, "format") == "ascii", ErrorKind::Format, "vti: only ascii arrays are supported");
    require(attribute(tag, "type") == "Float32", ErrorKind::Format, "vti: only Float32 arrays are supported");
    const auto close = doc.find("</DataArray>", pos);
    require(close != std::string_view::npos, ErrorKind::Format, "vti: unterminated DataArray");
    VtiArray a;
    a.name = attribute(tag, "Name");
    a.values = numbers<float>(doc.substr(pos, close - pos), "value");
    require(a.values.size() == v.dims.count(), ErrorKind::CountMismatch,
            "vti: array '" + a.name + "' holds " + std::to_string(a.values.size()) + " values, expected " +
                std::to_string(v.dims.count()));
    v.arrays.push_back(std::move(a));
    pos = close;
  }
  require(!v.arrays.empty(), ErrorKind::Format, "vti: no data arrays");
  return v;
}

VtiVolume read_vti(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open '" + path + "'");
  return read_vti(in);
}

}  // namespace understory
