#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "understory/volume_io.hpp"
#include "text_util.hpp"

namespace understory {
namespace fs = std::filesystem;

namespace {

// Poses from outside may carry rounded quaternions; normalize small drift.
CameraPose make_pose(double x, double y, double z, double qw, double qx, double qy, double qz, const std::string& where) {
  Eigen::Quaterniond q(qw, qx, qy, qz);
  const double n = q.norm();
  require(std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(n), ErrorKind::Format,
          where + ": non-finite pose value");
  require(std::abs(n - 1.0) <= 1e-3, ErrorKind::Format, where + ": quaternion is not unit length");
  CameraPose p;
  p.position = Eigen::Vector3d(x, y, z);
  p.orientation = q.normalized();
  return p;
}

}  // namespace

std::vector<CameraPose> read_poses_text(std::istream& in) {
  std::vector<CameraPose> poses;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto tok = text::split_ws(line);
    if (tok.empty()) continue;
    const std::string where = "pose line " + std::to_string(lineno);
    require(tok.size() == 7, ErrorKind::Format, where + ": expected 'x y z qw qx qy qz'");
    double v[7];
    for (int i = 0; i < 7; ++i) v[i] = text::parse<double>(tok[static_cast<std::size_t>(i)], where);
    poses.push_back(make_pose(v[0], v[1], v[2], v[3], v[4], v[5], v[6], where));
  }
  return poses;
}

void write_poses_text(std::ostream& out, std::span<const CameraPose> poses) {
  out << "# x y z qw qx qy qz\n";
  for (const auto& p : poses) {
    const auto& q = p.orientation;
    out << text::num(p.position.x()) << ' ' << text::num(p.position.y()) << ' ' << text::num(p.position.z()) << ' '
        << text::num(q.w()) << ' ' << text::num(q.x()) << ' ' << text::num(q.y()) << ' ' << text::num(q.z()) << '\n';
  }
}

std::vector<CameraPose> read_poses_json(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("pose json: ") + e.what());
  }
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    require(doc.contains("poses"), ErrorKind::Format, "pose json: missing 'poses'");
    list = &doc["poses"];
  }
  require(list->is_array(), ErrorKind::Format, "pose json: 'poses' must be an array");
  std::vector<CameraPose> poses;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const auto& e = (*list)[i];
    const std::string where = "pose json entry " + std::to_string(i);
    require(e.is_object() && e.contains("position") && e.contains("quaternion"), ErrorKind::Format,
            where + ": needs 'position' and 'quaternion'");
    const auto& p = e["position"];
    const auto& q = e["quaternion"];
    require(p.is_array() && p.size() == 3 && q.is_array() && q.size() == 4, ErrorKind::Format,
            where + ": position needs 3 numbers, quaternion 4 (w x y z)");
    for (const auto* arr : {&p, &q}) {
      for (const auto& x : *arr) require(x.is_number(), ErrorKind::Format, where + ": non-numeric value");
    }
    poses.push_back(make_pose(p[0].get<double>(), p[1].get<double>(), p[2].get<double>(), q[0].get<double>(),
                              q[1].get<double>(), q[2].get<double>(), q[3].get<double>(), where));
  }
  return poses;
}

std::vector<CameraPose> read_poses(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open pose file '" + path + "'");
  if (fs::path(path).extension() == ".json") return read_poses_json(in);
  return read_poses_text(in);
}

namespace {

// Last run of digits in a file stem, e.g. 12 for "image_12".
std::optional<long> numeric_key(const std::string& stem) {
  long value = -1;
  std::size_t i = stem.size();
  while (i > 0 && !std::isdigit(static_cast<unsigned char>(stem[i - 1]))) --i;
  std::size_t j = i;
  while (j > 0 && std::isdigit(static_cast<unsigned char>(stem[j - 1]))) --j;
  if (i == j || i - j > 12) return std::nullopt;
  value = std::stol(stem.substr(j, i - j));
  return value;
}

}  // namespace

ApertureScan read_scan(const std::string& directory) {
  require(fs::is_directory(directory), ErrorKind::Io, "scan directory '" + directory + "' does not exist");
  const fs::path dir(directory);
  ApertureScan scan;
  if (fs::exists(dir / "poses.txt")) {
    scan.poses = read_poses((dir / "poses.txt").string());
  } else if (fs::exists(dir / "poses.json")) {
    scan.poses = read_poses((dir / "poses.json").string());
  } else {
    fail(ErrorKind::Io, "scan directory has no poses.txt or poses.json");
  }
  require(fs::exists(dir / "camera.txt"), ErrorKind::Io, "scan directory has no camera.txt");
  for (const auto& [k, v] : read_manifest((dir / "camera.txt").string())) {
    if (k == "fov_deg") {
      scan.intrinsics.fov_deg = text::parse<double>(v, "fov_deg");
    } else if (k != "image_size") {
      fail(ErrorKind::Format, "camera.txt: unknown key '" + k + "'");
    }
  }

  std::vector<std::pair<long, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".pgm") continue;
    const auto key = numeric_key(entry.path().stem().string());
    require(key.has_value(), ErrorKind::Format, "image '" + entry.path().filename().string() + "' has no index");
    files.emplace_back(*key, entry.path());
  }
  std::sort(files.begin(), files.end());
  for (std::size_t i = 1; i < files.size(); ++i) {
    require(files[i].first != files[i - 1].first, ErrorKind::Format,
            "two images share index " + std::to_string(files[i].first));
  }
  require(files.size() == scan.poses.size(), ErrorKind::CountMismatch,
          "scan has " + std::to_string(files.size()) + " images for " + std::to_string(scan.poses.size()) + " poses");
  for (const auto& [key, path] : files) {
    Image img = read_image(path.string());
    require(img.width == img.height, ErrorKind::ImageShape,
            "image '" + path.filename().string() + "' is not square (" + std::to_string(img.width) + "x" +
                std::to_string(img.height) + ")");
    if (!scan.images.empty()) {
      require(img.width == scan.images.front().width, ErrorKind::ImageShape,
              "image '" + path.filename().string() + "' differs in size from the first image");
    }
    scan.images.push_back(std::move(img));
  }
  scan.intrinsics.image_size = scan.images.front().width;
  scan.finalize();
  return scan;
}

void write_scan(const std::string& directory, const ApertureScan& scan) {
  scan.validate();
  fs::create_directories(directory);
  const fs::path dir(directory);
  {
    std::ofstream out(dir / "poses.txt", std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write poses.txt");
    write_poses_text(out, scan.poses);
  }
  {
    std::ofstream out(dir / "camera.txt", std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write camera.txt");
    out << "fov_deg = " << text::num(scan.intrinsics.fov_deg) << "\nimage_size = " << scan.intrinsics.image_size << '\n';
  }
  for (std::size_t i = 0; i < scan.images.size(); ++i) {
    std::string digits = std::to_string(i);
    while (digits.size() < 4) digits.insert(digits.begin(), '0');
    write_image16((dir / ("image_" + digits + ".pgm")).string(), scan.images[i]);
  }
}

}  // namespace understory
