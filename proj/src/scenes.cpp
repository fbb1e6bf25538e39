#include "mvs/scenes.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mvs/errors.h"
#include "mvs/image_io.h"
#include "mvs/noise.h"

namespace mvs {

namespace {

constexpr uint64_t kReliefSeedSalt = 0x52454c49ull;   // decorrelate relief from texture
constexpr uint64_t kNearTexSeedSalt = 0x4e454152ull;  // distinct occluder texture

double relief_height(const SceneSpec& spec, double x, double y) {
  double n = fractal_noise(spec.texture_seed ^ kReliefSeedSalt,
                           x * spec.relief_freq, y * spec.relief_freq, 0, 3);
  return spec.relief_amplitude * (2.0 * n - 1.0);
}

// Surface footprint seen from the arc; used to size the textureless band.
double surface_footprint(const SceneSpec& spec) {
  return spec.arc_radius * static_cast<double>(spec.width) / spec.focal;
}

bool in_textureless_band(const SceneSpec& spec, double x) {
  if (spec.textureless_frac <= 0.0) return false;
  double half = 0.5 * spec.textureless_frac * surface_footprint(spec);
  return std::abs(x) < half;
}

Eigen::Vector3d texture_color(const SceneSpec& spec, uint64_t seed, double x,
                              double y) {
  double contrast = in_textureless_band(spec, x) ? 0.0 : spec.contrast;
  Eigen::Vector3d c;
  for (uint32_t ch = 0; ch < 3; ++ch) {
    double n = fractal_noise(seed, x * spec.noise_freq, y * spec.noise_freq, ch, 4);
    c[ch] = std::min(std::max(0.5 + (n - 0.5) * contrast, 0.0), 1.0);
  }
  return c;
}

struct RayHit {
  double depth = 0.0;  // camera-frame z; 0 = miss
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  bool near_plane = false;  // hit the occluder of a two-plane scene
};

// Depth along the ray where the world z coordinate equals plane_z.
double plane_depth(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                   double plane_z) {
  if (std::abs(dir.z()) < 1e-14) return 0.0;
  double t = (plane_z - origin.z()) / dir.z();
  return t > 0.0 ? t : 0.0;
}

RayHit cast_ray(const SceneSpec& spec, const Eigen::Vector3d& origin,
                const Eigen::Vector3d& dir) {
  RayHit hit;
  switch (spec.kind) {
    case GeometryKind::TexturedPlane: {
      double t = plane_depth(origin, dir, 0.0);
      if (t > 0.0) {
        hit.depth = t;
        hit.point = origin + t * dir;
      }
      return hit;
    }
    case GeometryKind::TwoPlaneOcclusion: {
      double tn = plane_depth(origin, dir, spec.near_offset);
      if (tn > 0.0) {
        Eigen::Vector3d p = origin + tn * dir;
        if (std::abs(p.x()) <= spec.near_half_w &&
            std::abs(p.y()) <= spec.near_half_h) {
          hit.depth = tn;
          hit.point = p;
          hit.near_plane = true;
          return hit;
        }
      }
      double t = plane_depth(origin, dir, 0.0);
      if (t > 0.0) {
        hit.depth = t;
        hit.point = origin + t * dir;
      }
      return hit;
    }
    case GeometryKind::HeightField: {
      // march from just inside the near limit, then bisect the sign change
      auto above = [&](double t) {
        Eigen::Vector3d p = origin + t * dir;
        return p.z() - relief_height(spec, p.x(), p.y());
      };
      const double t0 = 0.35 * spec.depth_min;
      const double t1 = 1.6 * spec.depth_max;
      const int steps = 600;
      double dt = (t1 - t0) / steps;
      double prev_t = t0;
      double prev_g = above(t0);
      if (prev_g <= 0.0) return hit;  // starts below the surface: treat as miss
      for (int i = 1; i <= steps; ++i) {
        double t = t0 + dt * i;
        double g = above(t);
        if (g <= 0.0) {
          double lo = prev_t, hi = t;
          for (int it = 0; it < 64; ++it) {
            double mid = 0.5 * (lo + hi);
            if (above(mid) > 0.0) {
              lo = mid;
            } else {
              hi = mid;
            }
          }
          hit.depth = 0.5 * (lo + hi);
          hit.point = origin + hit.depth * dir;
          return hit;
        }
        prev_t = t;
        prev_g = g;
      }
      return hit;
    }
  }
  return hit;
}

std::vector<Camera> arc_cameras(const SceneSpec& spec) {
  std::vector<Camera> cams;
  double span = spec.arc_span_deg * M_PI / 180.0;
  double elev = spec.elevation_deg * M_PI / 180.0;
  for (size_t i = 0; i < spec.views; ++i) {
    double frac = spec.views == 1 ? 0.5
                                  : static_cast<double>(i) /
                                        static_cast<double>(spec.views - 1);
    double theta = span * (frac - 0.5);
    Eigen::Vector3d center(spec.arc_radius * std::cos(elev) * std::sin(theta),
                           spec.arc_radius * std::sin(elev),
                           spec.arc_radius * std::cos(elev) * std::cos(theta));
    Eigen::Vector3d fwd = (-center).normalized();  // look at the origin
    Eigen::Vector3d right = fwd.cross(Eigen::Vector3d::UnitY()).normalized();
    Eigen::Vector3d down = fwd.cross(right).normalized();
    Eigen::Matrix3d r;
    r.row(0) = right;
    r.row(1) = down;
    r.row(2) = fwd;
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = k(1, 1) = spec.focal;
    k(0, 2) = (static_cast<double>(spec.width) - 1.0) / 2.0;
    k(1, 2) = (static_cast<double>(spec.height) - 1.0) / 2.0;
    cams.emplace_back(k, r, -r * center, spec.depth_min, spec.depth_max);
  }
  return cams;
}

}  // namespace

void SceneSpec::validate() const {
  if (views < 2) throw DataError("scene: need at least 2 views");
  if (width % 4 != 0 || height % 4 != 0) {
    throw DataError("scene: extents must be multiples of 4");
  }
  if (!(depth_min > 0.0 && depth_min < depth_max)) {
    throw DataError("scene: bad depth range");
  }
  if (!(focal > 0.0) || !(arc_radius > 0.0)) throw DataError("scene: bad geometry");
  if (kind == GeometryKind::TwoPlaneOcclusion &&
      !(near_offset > 0.0 && near_offset < arc_radius)) {
    throw DataError("scene: occluder must sit between surface and cameras");
  }
}

double analytic_depth(const SceneSpec& spec, const Camera& cam, double u,
                      double v) {
  Eigen::Vector3d origin = cam.center();
  Eigen::Vector3d dir = cam.R.transpose() * (cam.K.inverse() * Eigen::Vector3d(u, v, 1.0));
  // dir has unit camera-frame z, so the ray parameter equals camera depth
  return cast_ray(spec, origin, dir).depth;
}

SceneData render(const SceneSpec& spec) {
  spec.validate();
  std::vector<Camera> cams = arc_cameras(spec);

  SceneData data;
  data.spec = spec;
  for (size_t v = 0; v < spec.views; ++v) {
    // every camera must see the look-at point
    Eigen::Vector3d proj = cams[v].project(Eigen::Vector3d::Zero());
    if (proj.x() < 0 || proj.x() > static_cast<double>(spec.width - 1) ||
        proj.y() < 0 || proj.y() > static_cast<double>(spec.height - 1) ||
        proj.z() <= 0) {
      throw DataError("scene: camera " + std::to_string(v) +
                      " does not see the look-at point");
    }

    SceneView view;
    view.camera = cams[v];
    std::vector<double> img(3 * spec.height * spec.width, 0.0);
    std::vector<double> depth(spec.height * spec.width, 0.0);
    Eigen::Vector3d origin = cams[v].center();
    Eigen::Matrix3d k_inv = cams[v].K.inverse();
    Eigen::Matrix3d r_t = cams[v].R.transpose();
    for (size_t y = 0; y < spec.height; ++y) {
      for (size_t x = 0; x < spec.width; ++x) {
        Eigen::Vector3d dir =
            r_t * (k_inv * Eigen::Vector3d(static_cast<double>(x),
                                           static_cast<double>(y), 1.0));
        RayHit hit = cast_ray(spec, origin, dir);
        size_t px = y * spec.width + x;
        if (hit.depth <= 0.0) continue;
        depth[px] = hit.depth;
        uint64_t seed = hit.near_plane ? spec.texture_seed ^ kNearTexSeedSalt
                                       : spec.texture_seed;
        Eigen::Vector3d c = texture_color(spec, seed, hit.point.x(), hit.point.y());
        for (size_t ch = 0; ch < 3; ++ch) {
          img[ch * spec.height * spec.width + px] = c[ch];
        }
      }
    }
    view.image = Tensor::from_data({3, spec.height, spec.width}, std::move(img));
    view.depth = Tensor::from_data({spec.height, spec.width}, std::move(depth));
    data.views.push_back(std::move(view));
  }

  // neighbor lists: other views sorted by camera-center distance
  for (size_t v = 0; v < spec.views; ++v) {
    std::vector<std::pair<double, size_t>> order;
    for (size_t o = 0; o < spec.views; ++o) {
      if (o == v) continue;
      double d = (cams[v].center() - cams[o].center()).norm();
      order.emplace_back(d, o);
    }
    std::sort(order.begin(), order.end());
    for (auto& [d, o] : order) data.views[v].neighbors.push_back(o);
  }
  return data;
}

std::vector<Eigen::Vector3d> analytic_surface_cloud(const SceneData& data) {
  std::vector<Eigen::Vector3d> cloud;
  for (const auto& view : data.views) {
    size_t h = view.depth.dim(0), w = view.depth.dim(1);
    for (size_t y = 0; y < h; ++y) {
      for (size_t x = 0; x < w; ++x) {
        double d = view.depth.at({y, x});
        if (d > 0.0) {
          cloud.push_back(view.camera.unproject(static_cast<double>(x),
                                                static_cast<double>(y), d));
        }
      }
    }
  }
  return cloud;
}

void write_dataset(const SceneData& data, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "cams");
  fs::create_directories(dir / "depths");
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("cannot write manifest in " + dir.string());
  for (size_t v = 0; v < data.views.size(); ++v) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu", v);
    std::string img = "images/" + std::string(name) + ".png";
    std::string cam = "cams/" + std::string(name) + "_cam.txt";
    std::string dep = "depths/" + std::string(name) + ".pfm";
    const auto& view = data.views[v];
    write_png_rgb(dir / img, view.image);
    double interval =
        (view.camera.depth_max - view.camera.depth_min) / 63.0;
    write_camera_file(dir / cam, view.camera, interval, 64);
    write_pfm(dir / dep, view.depth);
    manifest << v << ' ' << img << ' ' << cam << ' ' << dep;
    for (size_t n : view.neighbors) manifest << ' ' << n;
    manifest << '\n';
  }
  if (!manifest) throw DataError("failed writing manifest in " + dir.string());
}

SceneData load_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("manifest not found in " + dir.string());
  struct Row {
    size_t id;
    std::string img, cam, dep;
    std::vector<size_t> neighbors;
  };
  std::vector<Row> rows;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    Row row;
    if (!(is >> row.id >> row.img >> row.cam >> row.dep)) {
      throw DataError("malformed manifest line in " + dir.string() + ": " + line);
    }
    size_t n;
    while (is >> n) row.neighbors.push_back(n);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("empty manifest in " + dir.string());

  SceneData data;
  data.views.resize(rows.size());
  for (const auto& row : rows) {
    if (row.id >= rows.size()) {
      throw DataError("manifest in " + dir.string() + " references unknown view id " +
                      std::to_string(row.id));
    }
    for (size_t n : row.neighbors) {
      if (n >= rows.size()) {
        throw DataError("view " + std::to_string(row.id) +
                        " lists unknown neighbor id " + std::to_string(n));
      }
    }
    SceneView& view = data.views[row.id];
    try {
      view.image = read_png_rgb(dir / row.img);
      view.depth = read_pfm(dir / row.dep);
      view.camera = read_camera_file(dir / row.cam).camera;
    } catch (const DataError& e) {
      throw DataError("view " + std::to_string(row.id) + " of " + dir.string() +
                      ": " + e.what());
    }
    view.neighbors = row.neighbors;
  }
  return data;
}

std::vector<std::pair<std::string, SceneSpec>> default_suite() {
  std::vector<std::pair<std::string, SceneSpec>> suite;
  auto base = [](uint64_t seed) {
    SceneSpec s;
    s.texture_seed = seed;
    s.views = 5;
    s.width = 80;
    s.height = 64;
    return s;
  };

  SceneSpec s0 = base(101);
  s0.kind = GeometryKind::TexturedPlane;
  suite.emplace_back("train_000", s0);

  SceneSpec s1 = base(202);
  s1.kind = GeometryKind::HeightField;
  suite.emplace_back("train_001", s1);

  SceneSpec s2 = base(303);
  s2.kind = GeometryKind::TwoPlaneOcclusion;
  suite.emplace_back("train_002", s2);

  SceneSpec s3 = base(404);
  s3.kind = GeometryKind::HeightField;
  s3.textureless_frac = 0.18;
  s3.relief_amplitude = 0.85;
  suite.emplace_back("train_003", s3);

  SceneSpec s4 = base(505);
  s4.kind = GeometryKind::TexturedPlane;
  s4.elevation_deg = 20.0;
  s4.contrast = 0.7;
  suite.emplace_back("train_004", s4);

  SceneSpec e0 = base(606);
  e0.kind = GeometryKind::HeightField;
  e0.relief_amplitude = 0.75;
  suite.emplace_back("eval_000", e0);

  SceneSpec e1 = base(707);
  e1.kind = GeometryKind::TwoPlaneOcclusion;
  e1.textureless_frac = 0.15;
  suite.emplace_back("eval_001", e1);

  return suite;
}

void materialize_suite(const std::filesystem::path& root) {
  for (const auto& [name, spec] : default_suite()) {
    auto dir = root / name;
    if (std::filesystem::exists(dir / "manifest.txt")) continue;
    write_dataset(render(spec), dir);
  }
}

}  // namespace mvs
