#include "mvs/fusion.h"

#include <cmath>

#include "mvs/errors.h"

namespace mvs {

namespace {

// Bilinear depth lookup; fails when any of the four neighbors is invalid or
// the coordinate leaves the interpolation domain.
bool sample_depth(const Tensor& depth, double u, double v, double* out) {
  size_t h = depth.dim(0), w = depth.dim(1);
  if (!(u >= 0.0 && u <= static_cast<double>(w - 1) && v >= 0.0 &&
        v <= static_cast<double>(h - 1))) {
    return false;
  }
  size_t x0 = std::min(static_cast<size_t>(u), w >= 2 ? w - 2 : 0);
  size_t y0 = std::min(static_cast<size_t>(v), h >= 2 ? h - 2 : 0);
  double fx = u - static_cast<double>(x0);
  double fy = v - static_cast<double>(y0);
  const auto& d = depth.data();
  double d00 = d[y0 * w + x0];
  double d01 = d[y0 * w + std::min(x0 + 1, w - 1)];
  double d10 = d[std::min(y0 + 1, h - 1) * w + x0];
  double d11 = d[std::min(y0 + 1, h - 1) * w + std::min(x0 + 1, w - 1)];
  if (d00 <= 0.0 || d01 <= 0.0 || d10 <= 0.0 || d11 <= 0.0) return false;
  *out = (1 - fy) * ((1 - fx) * d00 + fx * d01) + fy * ((1 - fx) * d10 + fx * d11);
  return true;
}

}  // namespace

PointCloud filter_and_fuse(const std::vector<FusionView>& views,
                           const FusionParams& params) {
  if (views.size() < 2) throw DataError("fusion: need at least 2 views");
  PointCloud cloud;
  bool color = true;
  for (const auto& v : views) color &= v.image.defined();

  for (size_t vi = 0; vi < views.size(); ++vi) {
    const auto& view = views[vi];
    size_t h = view.depth.dim(0), w = view.depth.dim(1);
    for (size_t y = 0; y < h; ++y) {
      for (size_t x = 0; x < w; ++x) {
        double d = view.depth.at({y, x});
        if (d <= 0.0) continue;
        if (view.confidence.at({y, x}) < params.min_confidence) continue;

        Eigen::Vector3d xw = view.camera.unproject(static_cast<double>(x),
                                                   static_cast<double>(y), d);
        std::vector<Eigen::Vector3d> consistent{xw};
        size_t hits = 0;
        for (size_t nj : view.neighbors) {
          const auto& nb = views[nj];
          Eigen::Vector3d proj = nb.camera.project(xw);
          if (proj.z() <= 0.0) continue;
          double dj;
          if (!sample_depth(nb.depth, proj.x(), proj.y(), &dj)) continue;
          Eigen::Vector3d xj = nb.camera.unproject(proj.x(), proj.y(), dj);
          Eigen::Vector3d back = view.camera.project(xj);
          if (back.z() <= 0.0) continue;
          double err_px = std::hypot(back.x() - static_cast<double>(x),
                                     back.y() - static_cast<double>(y));
          double err_d = std::abs(back.z() - d) / d;
          if (err_px < params.max_reproj_px && err_d < params.max_rel_depth_diff) {
            ++hits;
            consistent.push_back(xj);
          }
        }
        if (hits < params.min_consistent) continue;

        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        for (const auto& p : consistent) mean += p;
        mean /= static_cast<double>(consistent.size());
        cloud.points.push_back(mean);
        if (color) {
          cloud.colors.push_back(
              {static_cast<uint8_t>(std::lround(
                   std::clamp(view.image.at({0, y, x}), 0.0, 1.0) * 255.0)),
               static_cast<uint8_t>(std::lround(
                   std::clamp(view.image.at({1, y, x}), 0.0, 1.0) * 255.0)),
               static_cast<uint8_t>(std::lround(
                   std::clamp(view.image.at({2, y, x}), 0.0, 1.0) * 255.0))});
        }
      }
    }
  }
  return cloud;
}

}  // namespace mvs
