#pragma once

#include <Eigen/Dense>
#include <filesystem>

namespace mvs {

/// Pinhole camera with world-to-camera extrinsics: x_cam = R * x_world + t.
/// Depth is the z coordinate in the camera frame.
struct Camera {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  double depth_min = 0.0;
  double depth_max = 0.0;

  Camera() = default;
  Camera(const Eigen::Matrix3d& K, const Eigen::Matrix3d& R,
         const Eigen::Vector3d& t, double depth_min, double depth_max);

  Eigen::Vector3d center() const { return -R.transpose() * t; }

  /// Camera for an image resampled by `factor` (e.g. 0.5 per pyramid level),
  /// with pixel centers at integer coordinates.
  Camera scaled(double factor) const;

  /// Project a world point; returns (u, v, depth).
  Eigen::Vector3d project(const Eigen::Vector3d& x_world) const;

  /// Ray through pixel (u,v) at camera-frame depth d, in world coordinates.
  Eigen::Vector3d unproject(double u, double v, double depth) const;
};

/// On-disk record: extrinsic 4x4, intrinsic 3x3, then
/// "depth_min depth_interval depth_num depth_max".
struct CameraRecord {
  Camera camera;
  double depth_interval = 0.0;
  size_t depth_count = 0;
};

CameraRecord read_camera_file(const std::filesystem::path& path);
void write_camera_file(const std::filesystem::path& path, const Camera& cam,
                       double depth_interval, size_t depth_count);

}  // namespace mvs
