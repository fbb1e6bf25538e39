#include "mvs/metrics.h"

#include <cmath>
#include <unordered_map>

#include "mvs/errors.h"

namespace mvs {

namespace {

struct CellKey {
  int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  size_t operator()(const CellKey& k) const {
    uint64_t h = static_cast<uint64_t>(k.x) * 0x9e3779b97f4a7c15ull;
    h ^= static_cast<uint64_t>(k.y) * 0xc2b2ae3d27d4eb4full + (h << 6);
    h ^= static_cast<uint64_t>(k.z) * 0x165667b19e3779f9ull + (h >> 3);
    return static_cast<size_t>(h);
  }
};

// Exact nearest-neighbor search on a uniform grid: cells are expanded in
// Chebyshev shells; any point in an unvisited shell >= r+1 lies at least
// r*cell from the query, so the scan stops as soon as that bound (or the
// distance cap) exceeds the best hit.
class GridIndex {
 public:
  GridIndex(const std::vector<Eigen::Vector3d>& points, double cell)
      : points_(points), cell_(cell) {
    for (size_t i = 0; i < points.size(); ++i) {
      cells_[key_of(points[i])].push_back(i);
    }
  }

  double nearest_capped(const Eigen::Vector3d& q, double cap) const {
    CellKey center = key_of(q);
    double best = cap;
    int64_t max_shell =
        static_cast<int64_t>(std::ceil(cap / cell_)) + 1;
    for (int64_t r = 0; r <= max_shell; ++r) {
      double shell_bound = static_cast<double>(r - 1) * cell_;
      if (r > 0 && shell_bound >= best) break;
      scan_shell(center, r, q, &best);
    }
    return best;
  }

 private:
  CellKey key_of(const Eigen::Vector3d& p) const {
    return CellKey{static_cast<int64_t>(std::floor(p.x() / cell_)),
                   static_cast<int64_t>(std::floor(p.y() / cell_)),
                   static_cast<int64_t>(std::floor(p.z() / cell_))};
  }

  void visit(const CellKey& k, const Eigen::Vector3d& q, double* best) const {
    auto it = cells_.find(k);
    if (it == cells_.end()) return;
    for (size_t i : it->second) {
      double dx = points_[i].x() - q.x();
      double dy = points_[i].y() - q.y();
      double dz = points_[i].z() - q.z();
      double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (d < *best) *best = d;
    }
  }

  void scan_shell(const CellKey& c, int64_t r, const Eigen::Vector3d& q,
                  double* best) const {
    if (r == 0) {
      visit(c, q, best);
      return;
    }
    for (int64_t dx = -r; dx <= r; ++dx) {
      for (int64_t dy = -r; dy <= r; ++dy) {
        for (int64_t dz = -r; dz <= r; ++dz) {
          if (std::max({std::llabs(dx), std::llabs(dy), std::llabs(dz)}) != r) {
            continue;
          }
          visit(CellKey{c.x + dx, c.y + dy, c.z + dz}, q, best);
        }
      }
    }
  }

  const std::vector<Eigen::Vector3d>& points_;
  double cell_;
  std::unordered_map<CellKey, std::vector<size_t>, CellHash> cells_;
};

double mean_nearest(const std::vector<Eigen::Vector3d>& from,
                    const std::vector<Eigen::Vector3d>& to, double cap) {
  GridIndex index(to, std::max(cap / 2.0, 1e-9));
  double total = 0.0;
  for (const auto& p : from) total += index.nearest_capped(p, cap);
  return total / static_cast<double>(from.size());
}

}  // namespace

CloudMetrics pointcloud_metrics(const PointCloud& recon, const PointCloud& gt,
                                double max_dist) {
  if (recon.points.empty() || gt.points.empty()) {
    throw DataError("pointcloud_metrics: empty cloud");
  }
  if (!(max_dist > 0.0)) throw DataError("pointcloud_metrics: max_dist must be > 0");
  CloudMetrics m;
  m.accuracy = mean_nearest(recon.points, gt.points, max_dist);
  m.completeness = mean_nearest(gt.points, recon.points, max_dist);
  m.overall = 0.5 * (m.accuracy + m.completeness);
  return m;
}

DepthMetricsResult depth_metrics(const Tensor& pred, const Tensor& gt,
                                 const Tensor& valid) {
  if (pred.shape() != gt.shape() || pred.shape() != valid.shape()) {
    throw DataError("depth_metrics: shape mismatch");
  }
  double total = 0.0;
  size_t n = 0, over1 = 0, over3 = 0;
  for (size_t i = 0; i < pred.numel(); ++i) {
    if (valid.data()[i] <= 0.0) continue;
    double err = std::abs(pred.data()[i] - gt.data()[i]);
    total += err;
    ++n;
    if (err > 1.0) ++over1;
    if (err > 3.0) ++over3;
  }
  if (n == 0) throw DataError("depth_metrics: no valid pixels");
  DepthMetricsResult r;
  r.epe = total / static_cast<double>(n);
  r.e1 = 100.0 * static_cast<double>(over1) / static_cast<double>(n);
  r.e3 = 100.0 * static_cast<double>(over3) / static_cast<double>(n);
  return r;
}

}  // namespace mvs
