#include <istream>
#include <ostream>
#include <string>

#include "text_util.hpp"
#include "understory/scene_sim.hpp"

namespace understory {
namespace {
constexpr std::string_view kSceneMagic = "understory-scene";
constexpr int kSceneVersion = 1;
}  // namespace

void write_scene(std::ostream& out, const ForestScene& scene) {
  using text::num;
  out << kSceneMagic << ' ' << kSceneVersion << '\n';
  out << "plot " << num(scene.plot_side) << '\n';
  const auto& g = scene.ground;
  out << "ground " << g.nx << ' ' << g.ny << ' ' << num(g.texel) << '\n';
  for (int j = 0; j < g.ny; ++j) {
    out << "groundrow " << j;
    for (int i = 0; i < g.nx; ++i) out << ' ' << num(g.at(i, j));
    out << '\n';
  }
  for (const auto& t : scene.trees) {
    out << "tree " << num(t.x) << ' ' << num(t.y) << ' ' << num(t.height) << ' ' << num(t.trunk_length) << ' '
        << num(t.trunk_diameter) << ' ' << num(t.crown_radius) << ' ' << num(t.trunk_reflectance) << '\n';
    for (const auto& l : t.leaves) {
      out << "leaf";
      for (const auto* v : {&l.center, &l.half_u, &l.half_v}) {
        out << ' ' << num((*v).x()) << ' ' << num((*v).y()) << ' ' << num((*v).z());
      }
      out << ' ' << num(l.reflectance) << '\n';
    }
  }
}

ForestScene read_scene(std::istream& in) {
  ForestScene scene;
  std::string line;
  int line_no = 0;
  bool header = false;
  std::vector<bool> rows_seen;
  auto where = [&] { return "scene line " + std::to_string(line_no) + ": "; };

  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto tok = text::split_ws(body);
    if (!header) {
      require(tok.size() == 2 && tok[0] == kSceneMagic, ErrorKind::Format, where() + "not a scene file");
      require(text::parse<int>(tok[1], "version") == kSceneVersion, ErrorKind::Version,
              where() + "unsupported scene version");
      header = true;
      continue;
    }
    auto d = [&](std::size_t i) { return text::parse<double>(tok[i], "number"); };
    if (tok[0] == "plot" && tok.size() == 2) {
      scene.plot_side = d(1);
    } else if (tok[0] == "ground" && tok.size() == 4) {
      scene.ground.nx = text::parse<int>(tok[1], "ground nx");
      scene.ground.ny = text::parse<int>(tok[2], "ground ny");
      scene.ground.texel = d(3);
      require(scene.ground.nx > 0 && scene.ground.ny > 0 && scene.ground.texel > 0.0, ErrorKind::Format,
              where() + "bad ground raster");
      scene.ground.values.assign(static_cast<std::size_t>(scene.ground.nx) * scene.ground.ny, 0.0f);
      rows_seen.assign(static_cast<std::size_t>(scene.ground.ny), false);
    } else if (tok[0] == "groundrow") {
      require(!rows_seen.empty(), ErrorKind::Format, where() + "groundrow before ground");
      const int j = text::parse<int>(tok[1], "row");
      require(j >= 0 && j < scene.ground.ny && tok.size() == static_cast<std::size_t>(scene.ground.nx) + 2,
              ErrorKind::Format, where() + "bad ground row");
      for (int i = 0; i < scene.ground.nx; ++i) {
        scene.ground.values[static_cast<std::size_t>(j) * scene.ground.nx + i] =
            text::parse<float>(tok[static_cast<std::size_t>(i) + 2], "ground value");
      }
      rows_seen[static_cast<std::size_t>(j)] = true;
    } else if (tok[0] == "tree" && tok.size() == 8) {
      Tree t;
      t.x = d(1);
      t.y = d(2);
      t.height = d(3);
      t.trunk_length = d(4);
      t.trunk_diameter = d(5);
      t.crown_radius = d(6);
      t.trunk_reflectance = d(7);
      scene.trees.push_back(std::move(t));
    } else if (tok[0] == "leaf" && tok.size() == 11) {
      require(!scene.trees.empty(), ErrorKind::Format, where() + "leaf before any tree");
      LeafQuad l;
      l.center = {d(1), d(2), d(3)};
      l.half_u = {d(4), d(5), d(6)};
      l.half_v = {d(7), d(8), d(9)};
      l.reflectance = d(10);
      scene.trees.back().leaves.push_back(l);
    } else {
      fail(ErrorKind::Format, where() + "unknown or malformed record '" + std::string(tok[0]) + "'");
    }
  }
  require(header, ErrorKind::Format, "empty scene file");
  require(scene.plot_side > 0.0, ErrorKind::Format, "scene has no plot record");
  require(!rows_seen.empty(), ErrorKind::Format, "scene has no ground raster");
  for (bool seen : rows_seen) require(seen, ErrorKind::Format, "scene ground raster incomplete");
  return scene;
}

}  // namespace understory
