#pragma once

#include "mvs/ply.h"
#include "mvs/tensor.h"

namespace mvs {

struct CloudMetrics {
  double accuracy = 0.0;      // mean recon -> nearest gt distance (capped)
  double completeness = 0.0;  // mean gt -> nearest recon distance (capped)
  double overall = 0.0;       // (accuracy + completeness) / 2
};

/// Nearest-neighbor distances via an exact uniform-grid index; every
/// distance is capped at max_dist before averaging.
CloudMetrics pointcloud_metrics(const PointCloud& recon, const PointCloud& gt,
                                double max_dist);

struct DepthMetricsResult {
  double epe = 0.0;  // mean |pred - gt| over valid pixels
  double e1 = 0.0;   // % of valid pixels with error > 1
  double e3 = 0.0;   // % of valid pixels with error > 3
};

DepthMetricsResult depth_metrics(const Tensor& pred, const Tensor& gt,
                                 const Tensor& valid);

}  // namespace mvs
