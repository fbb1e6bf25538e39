#pragma once

#include "mvs/camera.h"
#include "mvs/hypotheses.h"
#include "mvs/tensor.h"

namespace mvs {

struct PixelWarp {
  double x = 0.0;
  double y = 0.0;
  double src_depth = 0.0;
  bool valid = false;
};

/// Map reference pixel (x,y) at candidate depth d into the source view:
/// unproject with the reference intrinsics, apply the relative pose, project
/// with the source intrinsics (perspective divide). Valid only when the
/// point lands in front of the source camera and inside its image.
PixelWarp warp_pixel(double x, double y, double depth, const Camera& ref_cam,
                     const Camera& src_cam, size_t src_width,
                     size_t src_height);

struct WarpedFeatures {
  Tensor volume;  // [C,D,H,W], zero where mask is 0
  Tensor mask;    // [D,H,W], constant 0/1
};

/// Build the source-view feature volume by bilinear sampling src_features at
/// the warped location of every (depth, pixel). Differentiable with respect
/// to src_features; poses and hypotheses are constants. mask is 1 exactly
/// where all four bilinear neighbors are in bounds and the projected depth
/// is positive.
WarpedFeatures warp_feature_map(const Tensor& src_features,
                                const DepthHypotheses& hypotheses,
                                const Camera& ref_cam, const Camera& src_cam);

}  // namespace mvs
