#pragma once

#include <array>

#include "mvs/tensor.h"

namespace mvs {

/// Candidate depths per pixel, [D,H,W]. Strictly increasing along the depth
/// axis and contained in [depth_min, depth_max]; constant with respect to
/// differentiation.
struct DepthHypotheses {
  Tensor values;

  size_t depth_count() const { return values.dim(0); }
  size_t height() const { return values.dim(1); }
  size_t width() const { return values.dim(2); }
  void validate(double depth_min, double depth_max) const;
};

struct HypothesisConfig {
  std::array<size_t, 3> counts{16, 8, 4};
  // per-stage hypothesis spacing as a multiple of the stage-1 interval
  std::array<double, 3> interval_scale{1.0, 0.5, 0.25};
  double depth_min = 0.0;
  double depth_max = 0.0;
};

/// Stage 1: `count` uniformly spaced depths spanning the whole range.
DepthHypotheses make_uniform_hypotheses(size_t count, double depth_min,
                                        double depth_max, size_t h, size_t w);

/// Refinement stages: a window of `count` depths spaced `interval` apart,
/// centered per pixel on `prev_depth` (bilinearly upsampled to h x w) and
/// shifted to stay inside [depth_min, depth_max].
DepthHypotheses make_refined_hypotheses(const Tensor& prev_depth, size_t count,
                                        double interval, double depth_min,
                                        double depth_max, size_t h, size_t w);

/// Stage dispatch; stage is 1-based, prev_depth required for stage > 1.
DepthHypotheses make_hypotheses(size_t stage, const Tensor* prev_depth,
                                const HypothesisConfig& config, size_t h,
                                size_t w);

}  // namespace mvs
