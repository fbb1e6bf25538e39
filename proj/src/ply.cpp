#include "mvs/ply.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mvs/errors.h"

namespace mvs {

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  if (cloud.has_colors() && cloud.colors.size() != cloud.points.size()) {
    throw DataError("write_ply: color count does not match point count");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write PLY: " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << cloud.points.size() << '\n';
  out << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_colors()) {
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  out << "end_header\n";
  char buf[128];
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g", p.x(), p.y(), p.z());
    out << buf;
    if (cloud.has_colors()) {
      out << ' ' << static_cast<int>(cloud.colors[i][0]) << ' '
          << static_cast<int>(cloud.colors[i][1]) << ' '
          << static_cast<int>(cloud.colors[i][2]);
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing PLY: " + path.string());
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("PLY not found: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "ply") {
    throw DataError("not a PLY file: " + path.string());
  }
  size_t count = 0;
  bool ascii = false;
  std::vector<std::string> vertex_props;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    std::istringstream is(line);
    std::string tok;
    is >> tok;
    if (tok == "format") {
      std::string fmt;
      is >> fmt;
      ascii = fmt == "ascii";
    } else if (tok == "element") {
      std::string kind;
      is >> kind >> count;
      in_vertex = kind == "vertex";
      if (!in_vertex && count > 0) {
        throw DataError("PLY " + path.string() + ": only vertex elements supported");
      }
    } else if (tok == "property" && in_vertex) {
      std::string type, name;
      is >> type >> name;
      vertex_props.push_back(name);
    } else if (tok == "end_header") {
      break;
    } else if (tok == "comment" || tok.empty()) {
      continue;
    }
  }
  if (!ascii) throw DataError("PLY " + path.string() + ": only ascii format supported");
  if (vertex_props.size() < 3 || vertex_props[0] != "x" || vertex_props[1] != "y" ||
      vertex_props[2] != "z") {
    throw DataError("PLY " + path.string() + ": expected x y z properties first");
  }
  bool with_color = vertex_props.size() >= 6 && vertex_props[3] == "red";

  PointCloud cloud;
  cloud.points.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) {
      throw DataError("PLY " + path.string() + ": truncated vertex list");
    }
    std::istringstream is(line);
    double x, y, z;
    if (!(is >> x >> y >> z)) {
      throw DataError("PLY " + path.string() + ": bad vertex line: " + line);
    }
    cloud.points.emplace_back(x, y, z);
    if (with_color) {
      int r, g, b;
      if (!(is >> r >> g >> b)) {
        throw DataError("PLY " + path.string() + ": bad color on line: " + line);
      }
      cloud.colors.push_back({static_cast<uint8_t>(r), static_cast<uint8_t>(g),
                              static_cast<uint8_t>(b)});
    }
  }
  return cloud;
}

}  // namespace mvs
