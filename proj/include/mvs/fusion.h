#pragma once

#include <vector>

#include "mvs/camera.h"
#include "mvs/ply.h"
#include "mvs/tensor.h"

namespace mvs {

struct FusionParams {
  double min_confidence = 0.3;      // tau_c
  double max_reproj_px = 1.0;       // tau_px
  double max_rel_depth_diff = 0.01; // tau_d
  size_t min_consistent = 2;        // k neighbor views
};

struct FusionView {
  Tensor depth;       // [H,W]; non-positive marks invalid
  Tensor confidence;  // [H,W]
  Camera camera;
  std::vector<size_t> neighbors;
  Tensor image;  // optional [3,H,W]; colors the fused points when present
};

/// Keep pixels whose confidence clears tau_c and that are geometrically
/// consistent with at least k neighbor views (round-trip reprojection under
/// tau_px pixels and relative depth difference under tau_d); each surviving
/// pixel contributes the mean of its consistent unprojections. Source depth
/// is sampled bilinearly at the projected location. An empty result is
/// allowed.
PointCloud filter_and_fuse(const std::vector<FusionView>& views,
                           const FusionParams& params);

}  // namespace mvs
