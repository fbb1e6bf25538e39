#pragma once

#include <array>
#include <vector>

#include "mvs/camera.h"
#include "mvs/features.h"
#include "mvs/hypotheses.h"
#include "mvs/params.h"
#include "mvs/warp.h"

namespace mvs {

struct RegularizerConfig {
  size_t channels = 8;
  size_t extra_layers = 0;  // 3x3x3 conv+relu pairs beyond the default two
};

struct PipelineConfig {
  FeatureConfig features;
  RegularizerConfig regularizer;
  HypothesisConfig hypotheses;  // depth range is overwritten per scene
};

/// Everything one cascade stage produces; the losses consume these.
struct CostVolumeBundle {
  Tensor ref_features;         // [C,H,W]
  std::vector<Tensor> warped;  // per source view, [C,D,H,W]
  std::vector<Tensor> masks;   // per source view, [D,H,W], constant 0/1
  Tensor variance;             // [C,D,H,W]
  Tensor prob;                 // [D,H,W], softmax over D
  Tensor depth;                // [H,W], expectation over hypotheses
  Tensor confidence;           // [H,W], in [0,1]
  DepthHypotheses hypotheses;
  Tensor pixel_valid;          // [H,W], 1 where any source sample is valid

  size_t depth_count() const { return prob.dim(0); }
  size_t height() const { return prob.dim(1); }
  size_t width() const { return prob.dim(2); }

  /// Enforce the type invariants; called after every forward pass.
  void validate() const;
};

/// Per-channel population variance across the reference feature (broadcast
/// over depth) and each valid warped sample. Samples with mask=0 are
/// excluded; where no source is valid the variance is 0 and the pixel is
/// flagged invalid in the returned bundle's pixel_valid.
Tensor aggregate_variance(const Tensor& ref_features,
                          const std::vector<WarpedFeatures>& warped);

/// Constant [H,W] map: 1 where at least one source sample is valid at some
/// hypothesis.
Tensor any_source_valid(const std::vector<WarpedFeatures>& warped);

ParamMap init_regularizer_params(size_t stage, size_t in_channels,
                                 const RegularizerConfig& cfg,
                                 std::mt19937_64& rng);

/// 3x3x3 conv stack with relu between convs, then a 1-channel projection;
/// returns the score volume [D,H,W] fed to softmax.
Tensor regularize(const Tensor& variance, const ParamMap& params, size_t stage,
                  const RegularizerConfig& cfg);

/// Soft-argmax readout: sum_d prob(d) * hypothesis(d) per pixel.
Tensor expected_depth(const Tensor& prob, const DepthHypotheses& hypotheses);

/// Start index of the 4-wide window around the depth argmax, per pixel.
std::vector<size_t> confidence_window_starts(const Tensor& prob);

/// Probability mass over the (up to) 4 hypotheses nearest the argmax.
/// `frozen_starts` pins the windows (used by gradient checking).
Tensor confidence_map(const Tensor& prob,
                      const std::vector<size_t>* frozen_starts = nullptr);

/// All learnable parameters of the pipeline (extractor + 3 regularizers),
/// fully determined by the seed.
ParamMap init_params(uint64_t seed, const PipelineConfig& cfg);

/// Non-differentiated quantities of a cascade pass, captured so a repeat
/// pass sees the identical discrete structure (gradient checking).
struct FrozenCascade {
  std::array<DepthHypotheses, 3> hypotheses;
  std::array<std::vector<size_t>, 3> window_starts;
};

struct CascadeResult {
  std::array<CostVolumeBundle, 3> stages;
};

FrozenCascade freeze_cascade(const CascadeResult& result);

/// Full three-stage forward pass. images[0] is the reference view; the
/// depth range comes from the reference camera.
CascadeResult run_cascade(const std::vector<Tensor>& images,
                          const std::vector<Camera>& cameras,
                          const ParamMap& params, const PipelineConfig& cfg,
                          const FrozenCascade* frozen = nullptr);

}  // namespace mvs
