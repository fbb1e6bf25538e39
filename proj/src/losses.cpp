#include "mvs/losses.h"

#include <cmath>
#include <sstream>

#include "mvs/errors.h"

namespace mvs {

namespace {

constexpr double kProbEps = 1e-12;  // clamp floor before log

double count_positive(const Tensor& mask) {
  double n = 0.0;
  for (double v : mask.data()) {
    if (v > 0.0) n += 1.0;
  }
  return n;
}

// Elementwise AND of two constant 0/1 maps.
Tensor and_masks(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DataError("mask shapes differ");
  std::vector<double> out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = (a.data()[i] > 0.0 && b.data()[i] > 0.0) ? 1.0 : 0.0;
  }
  return Tensor::from_data(a.shape(), std::move(out));
}

}  // namespace

void LossConfig::validate() const {
  for (double w : l1_weight) {
    if (w < 0) throw DataError("loss config: weights must be >= 0");
  }
  for (double w : cml_weight) {
    if (w < 0) throw DataError("loss config: weights must be >= 0");
  }
  for (double w : wfl_weight) {
    if (w < 0) throw DataError("loss config: weights must be >= 0");
  }
  if (!enable_l1 && !enable_cml && !enable_wfl) {
    throw DataError("loss config: at least one term must be enabled");
  }
  if (focal_gamma != 2.0) {
    throw DataError("loss config: the focal exponent is fixed at 2");
  }
}

LossConfig LossConfig::ablation_row(char row) {
  LossConfig cfg;
  switch (row) {
    case 'a':
      cfg.enable_l1 = true;
      break;
    case 'b':
      cfg.enable_l1 = true;
      cfg.enable_cml = true;
      break;
    case 'c':
      cfg.enable_l1 = false;
      cfg.enable_wfl = true;
      break;
    case 'd':
      cfg.enable_l1 = false;
      cfg.enable_cml = true;
      cfg.enable_wfl = true;
      break;
    default:
      throw DataError("ablation row must be one of a,b,c,d");
  }
  return cfg;
}

GroundTruthPack make_gt_pack(const Tensor& gt_depth_full,
                             const CascadeResult& result, double depth_min,
                             double depth_max) {
  if (gt_depth_full.ndim() != 2) throw DataError("gt depth must be [H,W]");
  size_t fh = gt_depth_full.dim(0), fw = gt_depth_full.dim(1);
  GroundTruthPack pack;
  for (size_t s = 0; s < 3; ++s) {
    const auto& bundle = result.stages[s];
    size_t h = bundle.height(), w = bundle.width();
    size_t step = size_t{1} << (2 - s);
    if (h * step != fh || w * step != fw) {
      throw DataError("gt depth resolution does not match the cascade");
    }
    std::vector<double> gt(h * w), valid(h * w);
    for (size_t y = 0; y < h; ++y) {
      for (size_t x = 0; x < w; ++x) {
        double v = gt_depth_full.at({y * step, x * step});
        gt[y * w + x] = v;
        valid[y * w + x] =
            (std::isfinite(v) && v >= depth_min && v <= depth_max) ? 1.0 : 0.0;
      }
    }
    size_t d = bundle.depth_count();
    const auto& hyp = bundle.hypotheses.values.data();
    std::vector<size_t> nearest(h * w, 0);
    for (size_t p = 0; p < h * w; ++p) {
      double best = std::abs(hyp[p] - gt[p]);
      size_t arg = 0;
      for (size_t k = 1; k < d; ++k) {
        double e = std::abs(hyp[k * h * w + p] - gt[p]);
        if (e < best) {
          best = e;
          arg = k;
        }
      }
      nearest[p] = arg;
    }
    pack.gt_depth[s] = Tensor::from_data({h, w}, std::move(gt));
    pack.valid[s] = Tensor::from_data({h, w}, std::move(valid));
    pack.nearest_index[s] = std::move(nearest);
  }
  return pack;
}

Tensor similarity(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 1 || b.ndim() != 1 || a.dim(0) != b.dim(0)) {
    throw DataError("similarity: feature vectors must have equal length");
  }
  return sum(mul(a, b));
}

Tensor cml(const CostVolumeBundle& bundle, const Tensor& valid,
           const std::vector<size_t>& nearest_index) {
  if (bundle.warped.empty()) throw DataError("cml: no source views");
  size_t d = bundle.warped[0].dim(1);
  size_t h = bundle.ref_features.dim(1), w = bundle.ref_features.dim(2);
  if (d < 2) throw DataError("cml: needs at least 2 depth candidates");
  Tensor loss_valid = and_masks(valid, bundle.pixel_valid);
  double n_valid = count_positive(loss_valid);
  if (n_valid == 0.0) throw NumericError("cml: no valid pixels in batch");

  size_t c = bundle.ref_features.dim(0);
  Tensor ref_r = reshape(bundle.ref_features, {c, 1, h, w});
  Tensor acc;
  for (size_t i = 0; i < bundle.warped.size(); ++i) {
    Tensor sim_vol = sum(mul(bundle.warped[i], ref_r), {0});  // [D,H,W]
    Tensor pos = gather_along0(sim_vol, nearest_index);
    Tensor total = sum(sim_vol, {0});
    Tensor neg_mean = mul_scalar(sub(total, pos), 1.0 / static_cast<double>(d - 1));
    Tensor contrib = sub(neg_mean, pos);  // = -(pos - neg_mean)

    // skip pixels whose warp is invalid at the positive hypothesis
    const auto& m = bundle.masks[i].data();
    std::vector<double> vm(h * w);
    const auto& lv = loss_valid.data();
    for (size_t p = 0; p < h * w; ++p) {
      vm[p] = (lv[p] > 0.0 && m[nearest_index[p] * h * w + p] > 0.0) ? 1.0 : 0.0;
    }
    Tensor view_mask = Tensor::from_data({h, w}, std::move(vm));
    Tensor term = sum(mul(contrib, view_mask));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return mul_scalar(acc, 1.0 / n_valid);
}

Tensor wfl(const CascadeResult& result, size_t stage, const Tensor& valid,
           const std::vector<size_t>& nearest_index, const LossConfig& cfg) {
  if (stage >= 3) throw DataError("wfl: stage out of range");
  for (const auto& b : result.stages) {
    if (!b.confidence.defined()) throw NumericError("wfl: missing stage confidence");
  }
  const auto& bundle = result.stages[stage];
  size_t h = bundle.height(), w = bundle.width();

  Tensor loss_valid = and_masks(valid, bundle.pixel_valid);
  double n_valid = count_positive(loss_valid);
  if (n_valid == 0.0) throw NumericError("wfl: no valid pixels in batch");

  Tensor weight;
  for (const auto& b : result.stages) {
    Tensor conf = cfg.stop_gradient_on_weight ? b.confidence.detach() : b.confidence;
    Tensor up = upsample_bilinear(conf, h, w);
    weight = weight.defined() ? mul(weight, up) : up;
  }

  Tensor p = clamp(gather_along0(bundle.prob, nearest_index), kProbEps, 1.0);
  Tensor focal = mul(square(add_scalar(neg(p), 1.0)), neg(log(p)));
  Tensor masked = mul(mul(weight, focal), loss_valid);
  return mul_scalar(sum(masked), 1.0 / n_valid);
}

Tensor l1_loss(const Tensor& depth, const Tensor& gt_depth, const Tensor& valid) {
  if (depth.shape() != gt_depth.shape() || depth.shape() != valid.shape()) {
    throw DataError("l1_loss: shape mismatch");
  }
  double n_valid = count_positive(valid);
  if (n_valid == 0.0) throw NumericError("l1_loss: no valid pixels in batch");
  Tensor diff = sub(depth, gt_depth);
  Tensor absdiff = add(relu(diff), relu(neg(diff)));
  return mul_scalar(sum(mul(absdiff, valid)), 1.0 / n_valid);
}

std::string LossReport::csv_row(size_t step) const {
  std::ostringstream os;
  os << step << ',' << l1_sum() << ',' << cml_sum() << ',' << wfl_sum() << ','
     << total_value;
  return os.str();
}

// 1 where at least one source view has a valid warp at the pixel's
// ground-truth-nearest hypothesis: only there is the supervised candidate
// backed by matching evidence.
static Tensor observable_at_gt(const CostVolumeBundle& bundle,
                               const std::vector<size_t>& nearest_index) {
  size_t h = bundle.height(), w = bundle.width();
  std::vector<double> obs(h * w, 0.0);
  for (const auto& mask : bundle.masks) {
    const auto& m = mask.data();
    for (size_t p = 0; p < h * w; ++p) {
      if (m[nearest_index[p] * h * w + p] > 0.0) obs[p] = 1.0;
    }
  }
  return Tensor::from_data({h, w}, std::move(obs));
}

LossReport total_loss(const CascadeResult& result, const GroundTruthPack& gt,
                      const LossConfig& cfg) {
  cfg.validate();
  LossReport report;
  Tensor total;
  auto accumulate = [&](const Tensor& term, double weight) {
    Tensor weighted = mul_scalar(term, weight);
    total = total.defined() ? add(total, weighted) : weighted;
  };
  for (size_t s = 0; s < 3; ++s) {
    const auto& bundle = result.stages[s];
    Tensor valid = and_masks(gt.valid[s], observable_at_gt(bundle, gt.nearest_index[s]));
    if (cfg.enable_l1) {
      Tensor lv = and_masks(valid, bundle.pixel_valid);
      Tensor term = l1_loss(bundle.depth, gt.gt_depth[s], lv);
      report.l1[s] = term.scalar_value();
      accumulate(term, cfg.l1_weight[s]);
    }
    if (cfg.enable_cml) {
      Tensor term = cml(bundle, valid, gt.nearest_index[s]);
      report.cml[s] = term.scalar_value();
      accumulate(term, cfg.cml_weight[s]);
    }
    if (cfg.enable_wfl) {
      Tensor term = wfl(result, s, valid, gt.nearest_index[s], cfg);
      report.wfl[s] = term.scalar_value();
      accumulate(term, cfg.wfl_weight[s]);
    }
  }
  report.total = total;
  report.total_value = total.scalar_value();
  if (!std::isfinite(report.total_value)) {
    throw NumericError("total_loss: non-finite objective");
  }
  return report;
}

}  // namespace mvs
