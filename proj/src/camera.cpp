#include "mvs/camera.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mvs/errors.h"

namespace mvs {

namespace {

void validate_camera(const Eigen::Matrix3d& K, const Eigen::Matrix3d& R,
                     double depth_min, double depth_max) {
  Eigen::Matrix3d err = R.transpose() * R - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > 1e-9) {
    throw DataError("camera: rotation is not orthonormal");
  }
  if (std::abs(R.determinant() - 1.0) > 1e-9) {
    throw DataError("camera: rotation determinant is not +1");
  }
  if (std::abs(K(1, 0)) > 1e-12 || std::abs(K(2, 0)) > 1e-12 ||
      std::abs(K(2, 1)) > 1e-12) {
    throw DataError("camera: intrinsic matrix is not upper-triangular");
  }
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0) || !(K(2, 2) > 0.0)) {
    throw DataError("camera: focal entries must be positive");
  }
  if (!(depth_min < depth_max)) {
    throw DataError("camera: depth_min must be less than depth_max");
  }
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Camera::Camera(const Eigen::Matrix3d& K_, const Eigen::Matrix3d& R_,
               const Eigen::Vector3d& t_, double dmin, double dmax)
    : K(K_), R(R_), t(t_), depth_min(dmin), depth_max(dmax) {
  validate_camera(K, R, depth_min, depth_max);
}

Camera Camera::scaled(double factor) const {
  Eigen::Matrix3d Ks = K;
  Ks(0, 0) *= factor;
  Ks(1, 1) *= factor;
  Ks(0, 1) *= factor;
  // pixel centers sit at integer coordinates, so the principal point maps
  // through the half-pixel offset
  Ks(0, 2) = (K(0, 2) + 0.5) * factor - 0.5;
  Ks(1, 2) = (K(1, 2) + 0.5) * factor - 0.5;
  return Camera(Ks, R, t, depth_min, depth_max);
}

Eigen::Vector3d Camera::project(const Eigen::Vector3d& x_world) const {
  Eigen::Vector3d c = R * x_world + t;
  Eigen::Vector3d p = K * c;
  return {p.x() / p.z(), p.y() / p.z(), c.z()};
}

Eigen::Vector3d Camera::unproject(double u, double v, double depth) const {
  Eigen::Vector3d dir = K.inverse() * Eigen::Vector3d(u, v, 1.0);
  return R.transpose() * (dir * depth - t);
}

CameraRecord read_camera_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("camera file not found: " + path.string());
  auto next_token = [&](const char* what) {
    std::string tok;
    if (!(in >> tok)) {
      throw DataError("camera file " + path.string() + ": missing " + what);
    }
    return tok;
  };
  auto next_double = [&](const char* what) {
    std::string tok = next_token(what);
    size_t pos = 0;
    double v;
    try {
      v = std::stod(tok, &pos);
    } catch (const std::exception&) {
      throw DataError("camera file " + path.string() + ": bad number for " +
                      what + ": '" + tok + "'");
    }
    if (pos != tok.size()) {
      throw DataError("camera file " + path.string() + ": bad number for " +
                      what + ": '" + tok + "'");
    }
    return v;
  };

  if (next_token("'extrinsic' header") != "extrinsic") {
    throw DataError("camera file " + path.string() + ": expected 'extrinsic'");
  }
  Eigen::Matrix4d E;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) E(r, c) = next_double("extrinsic entry");
  }
  if (next_token("'intrinsic' header") != "intrinsic") {
    throw DataError("camera file " + path.string() + ": expected 'intrinsic'");
  }
  Eigen::Matrix3d K;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) K(r, c) = next_double("intrinsic entry");
  }
  double dmin = next_double("depth_min");
  double dint = next_double("depth_interval");
  double dnum = next_double("depth_num");
  double dmax = next_double("depth_max");

  CameraRecord rec;
  rec.camera = Camera(K, E.topLeftCorner<3, 3>(), E.topRightCorner<3, 1>(),
                      dmin, dmax);
  rec.depth_interval = dint;
  rec.depth_count = static_cast<size_t>(dnum);
  return rec;
}

void write_camera_file(const std::filesystem::path& path, const Camera& cam,
                       double depth_interval, size_t depth_count) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write camera file: " + path.string());
  out << "extrinsic\n";
  for (int r = 0; r < 3; ++r) {
    out << fmt_double(cam.R(r, 0)) << ' ' << fmt_double(cam.R(r, 1)) << ' '
        << fmt_double(cam.R(r, 2)) << ' ' << fmt_double(cam.t(r)) << '\n';
  }
  out << "0 0 0 1\n\n";
  out << "intrinsic\n";
  for (int r = 0; r < 3; ++r) {
    out << fmt_double(cam.K(r, 0)) << ' ' << fmt_double(cam.K(r, 1)) << ' '
        << fmt_double(cam.K(r, 2)) << '\n';
  }
  out << '\n';
  out << fmt_double(cam.depth_min) << ' ' << fmt_double(depth_interval) << ' '
      << depth_count << ' ' << fmt_double(cam.depth_max) << '\n';
  if (!out) throw DataError("failed writing camera file: " + path.string());
}

}  // namespace mvs
