#include "mvs/hypotheses.h"

#include <cmath>

#include "mvs/errors.h"

namespace mvs {

void DepthHypotheses::validate(double depth_min, double depth_max) const {
  if (values.ndim() != 3) throw DataError("hypotheses: values must be [D,H,W]");
  size_t d = depth_count(), h = height(), w = width();
  const auto& v = values.data();
  double slack = 1e-9 * (depth_max - depth_min);
  for (size_t p = 0; p < h * w; ++p) {
    double prev = -std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < d; ++k) {
      double x = v[k * h * w + p];
      if (!(x > prev)) throw NumericError("hypotheses: not strictly increasing");
      if (x < depth_min - slack || x > depth_max + slack) {
        throw NumericError("hypotheses: value outside depth range");
      }
      prev = x;
    }
  }
}

DepthHypotheses make_uniform_hypotheses(size_t count, double depth_min,
                                        double depth_max, size_t h, size_t w) {
  if (count < 2) throw DataError("hypotheses: need at least 2 candidates");
  if (!(depth_min < depth_max)) throw DataError("hypotheses: bad depth range");
  double step = (depth_max - depth_min) / static_cast<double>(count - 1);
  std::vector<double> vals(count * h * w);
  for (size_t k = 0; k < count; ++k) {
    double d = depth_min + step * static_cast<double>(k);
    std::fill(vals.begin() + k * h * w, vals.begin() + (k + 1) * h * w, d);
  }
  return DepthHypotheses{Tensor::from_data({count, h, w}, std::move(vals))};
}

DepthHypotheses make_refined_hypotheses(const Tensor& prev_depth, size_t count,
                                        double interval, double depth_min,
                                        double depth_max, size_t h, size_t w) {
  if (count < 2) throw DataError("hypotheses: need at least 2 candidates");
  if (!(interval > 0.0)) throw DataError("hypotheses: interval must be positive");
  if (prev_depth.ndim() != 2) throw DataError("hypotheses: prev_depth must be [H,W]");

  Tensor center = upsample_bilinear(prev_depth.detach(), h, w);
  double span = interval * static_cast<double>(count - 1);
  double step = interval;
  if (span > depth_max - depth_min) {
    // window wider than the whole range: fall back to uniform coverage
    return make_uniform_hypotheses(count, depth_min, depth_max, h, w);
  }
  std::vector<double> vals(count * h * w);
  const auto& c = center.data();
  for (size_t p = 0; p < h * w; ++p) {
    double lo = c[p] - 0.5 * span;
    if (lo < depth_min) lo = depth_min;
    if (lo + span > depth_max) lo = depth_max - span;
    for (size_t k = 0; k < count; ++k) {
      vals[k * h * w + p] = lo + step * static_cast<double>(k);
    }
  }
  return DepthHypotheses{Tensor::from_data({count, h, w}, std::move(vals))};
}

DepthHypotheses make_hypotheses(size_t stage, const Tensor* prev_depth,
                                const HypothesisConfig& config, size_t h,
                                size_t w) {
  if (stage < 1 || stage > 3) throw DataError("hypotheses: stage must be 1..3");
  if (stage == 1) {
    return make_uniform_hypotheses(config.counts[0], config.depth_min,
                                   config.depth_max, h, w);
  }
  if (prev_depth == nullptr || !prev_depth->defined()) {
    throw DataError("hypotheses: prev_depth required for stage > 1");
  }
  double base =
      (config.depth_max - config.depth_min) / static_cast<double>(config.counts[0] - 1);
  double interval = base * config.interval_scale[stage - 1];
  return make_refined_hypotheses(*prev_depth, config.counts[stage - 1], interval,
                                 config.depth_min, config.depth_max, h, w);
}

}  // namespace mvs
