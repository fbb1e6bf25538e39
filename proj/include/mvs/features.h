#pragma once

#include <array>

#include "mvs/params.h"
#include "mvs/tensor.h"

namespace mvs {

struct FeatureConfig {
  size_t base_channels = 16;
  // coarse -> fine; stage 1 and 2 must match (top-down merge adds them)
  std::array<size_t, 3> stage_channels{16, 16, 8};
};

/// Per-stage feature maps: stage s has shape [C_s, H/2^(3-s), W/2^(3-s)],
/// i.e. stages go coarse (1) to fine (3, full resolution).
struct FeaturePyramid {
  std::array<Tensor, 3> stages;
};

/// Fresh extractor weights, fully determined by the rng state.
ParamMap init_feature_params(const FeatureConfig& cfg, std::mt19937_64& rng);

/// Shared-weight multi-scale extractor: two 3x3 convs + relu per level with
/// stride-2 downsampling between levels, 1x1 lateral merges on the way up.
/// H and W must be divisible by 4.
FeaturePyramid extract(const Tensor& image, const ParamMap& params,
                       const FeatureConfig& cfg);

}  // namespace mvs
