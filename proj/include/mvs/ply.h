#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <vector>

namespace mvs {

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<std::array<uint8_t, 3>> colors;  // empty, or one entry per point

  bool has_colors() const { return !colors.empty(); }
};

/// ASCII PLY with element vertex and x y z [red green blue] properties.
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);

}  // namespace mvs
