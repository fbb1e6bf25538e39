#pragma once

#include <array>
#include <string>

#include "mvs/matching.h"

namespace mvs {

struct LossConfig {
  std::array<double, 3> l1_weight{1.0, 1.0, 1.0};
  std::array<double, 3> cml_weight{0.1, 0.1, 0.1};
  std::array<double, 3> wfl_weight{1.0, 1.0, 1.0};
  bool enable_l1 = true;
  bool enable_cml = false;
  bool enable_wfl = false;
  double focal_gamma = 2.0;  // the focal exponent is fixed at 2
  // The focal weight map is treated as a constant by default; otherwise the
  // optimizer can null the loss by collapsing confidence.
  bool stop_gradient_on_weight = true;

  void validate() const;

  /// Ablation rows: 'a' L1, 'b' L1+CML, 'c' WFL, 'd' CML+WFL.
  static LossConfig ablation_row(char row);
};

/// Per-stage ground truth: depth resampled to stage resolution, validity,
/// and the index of the hypothesis nearest the ground-truth depth.
struct GroundTruthPack {
  std::array<Tensor, 3> gt_depth;
  std::array<Tensor, 3> valid;  // 1 only where gt is finite and in range
  std::array<std::vector<size_t>, 3> nearest_index;
};

GroundTruthPack make_gt_pack(const Tensor& gt_depth_full,
                             const CascadeResult& result, double depth_min,
                             double depth_max);

/// Inner product of two equal-length feature vectors.
Tensor similarity(const Tensor& a, const Tensor& b);

/// Contrastive matching loss for one cascade stage: per valid pixel and
/// source view, the warped feature at the ground-truth hypothesis is the
/// positive sample and the other D-1 warped features are negatives; the
/// negative mean similarity is subtracted from the positive similarity and
/// the result negated, summed over source views, averaged over valid pixels.
/// Views whose warp mask is 0 at the positive index are skipped.
Tensor cml(const CostVolumeBundle& bundle, const Tensor& valid,
           const std::vector<size_t>& nearest_index);

/// Confidence-weighted focal loss at one stage. The weight map is the
/// product of all three stages' confidences, bilinearly upsampled to this
/// stage's resolution.
Tensor wfl(const CascadeResult& result, size_t stage, const Tensor& valid,
           const std::vector<size_t>& nearest_index, const LossConfig& cfg);

/// Mean absolute depth error over valid pixels.
Tensor l1_loss(const Tensor& depth, const Tensor& gt_depth, const Tensor& valid);

struct LossReport {
  std::array<double, 3> l1{};   // raw per-stage values (unweighted)
  std::array<double, 3> cml{};
  std::array<double, 3> wfl{};
  double total_value = 0.0;
  Tensor total;  // differentiable objective

  double l1_sum() const { return l1[0] + l1[1] + l1[2]; }
  double cml_sum() const { return cml[0] + cml[1] + cml[2]; }
  double wfl_sum() const { return wfl[0] + wfl[1] + wfl[2]; }
  std::string csv_row(size_t step) const;
};

/// Weighted sum of the enabled terms over all three stages.
LossReport total_loss(const CascadeResult& result, const GroundTruthPack& gt,
                      const LossConfig& cfg);

}  // namespace mvs
