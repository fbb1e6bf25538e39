#include "mvs/matching.h"

#include <cmath>

#include "mvs/errors.h"

namespace mvs {

namespace {

const Tensor& param(const ParamMap& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw DataError("missing parameter: " + name);
  return it->second;
}

}  // namespace

void CostVolumeBundle::validate() const {
  size_t d = depth_count(), h = height(), w = width();
  const auto& p = prob.data();
  for (size_t px = 0; px < h * w; ++px) {
    double total = 0.0;
    for (size_t k = 0; k < d; ++k) total += p[k * h * w + px];
    if (std::abs(total - 1.0) > 1e-9) {
      throw NumericError("cost volume: probability does not sum to 1");
    }
  }
  const auto& hyp = hypotheses.values.data();
  const auto& dep = depth.data();
  for (size_t px = 0; px < h * w; ++px) {
    double lo = hyp[px];
    double hi = hyp[(d - 1) * h * w + px];
    double slack = 1e-9 * (hi - lo);
    if (dep[px] < lo - slack || dep[px] > hi + slack) {
      throw NumericError("cost volume: expected depth outside hypothesis range");
    }
  }
  for (double c : confidence.data()) {
    if (c < -1e-12 || c > 1.0 + 1e-12) {
      throw NumericError("cost volume: confidence outside [0,1]");
    }
  }
}

Tensor aggregate_variance(const Tensor& ref_features,
                          const std::vector<WarpedFeatures>& warped) {
  if (warped.empty()) throw DataError("aggregate_variance: need >=1 source view");
  size_t c = ref_features.dim(0);
  size_t d = warped[0].volume.dim(1);
  size_t h = ref_features.dim(1);
  size_t w = ref_features.dim(2);
  size_t plane = h * w;

  // counts are constants: 1 (reference) + valid sources per (d,p)
  std::vector<double> inv_n(d * plane);
  {
    std::vector<double> n(d * plane, 1.0);
    for (const auto& wf : warped) {
      const auto& m = wf.mask.data();
      for (size_t i = 0; i < n.size(); ++i) n[i] += m[i];
    }
    for (size_t i = 0; i < n.size(); ++i) inv_n[i] = 1.0 / n[i];
  }
  Tensor inv_n_t = Tensor::from_data({1, d, h, w}, std::move(inv_n));

  Tensor ref_r = reshape(ref_features, {c, 1, h, w});
  Tensor total = warped[0].volume;
  for (size_t i = 1; i < warped.size(); ++i) total = add(total, warped[i].volume);
  total = add(total, ref_r);
  Tensor mean_v = mul(total, inv_n_t);

  Tensor acc = square(sub(ref_r, mean_v));
  for (const auto& wf : warped) {
    Tensor mask_r = reshape(wf.mask, {1, d, h, w});
    acc = add(acc, mul(square(sub(wf.volume, mean_v)), mask_r));
  }
  return mul(acc, inv_n_t);
}

Tensor any_source_valid(const std::vector<WarpedFeatures>& warped) {
  if (warped.empty()) throw DataError("any_source_valid: need >=1 source view");
  size_t d = warped[0].mask.dim(0);
  size_t h = warped[0].mask.dim(1);
  size_t w = warped[0].mask.dim(2);
  std::vector<double> valid(h * w, 0.0);
  for (const auto& wf : warped) {
    const auto& m = wf.mask.data();
    for (size_t k = 0; k < d; ++k) {
      for (size_t p = 0; p < h * w; ++p) {
        if (m[k * h * w + p] > 0.0) valid[p] = 1.0;
      }
    }
  }
  return Tensor::from_data({h, w}, std::move(valid));
}

ParamMap init_regularizer_params(size_t stage, size_t in_channels,
                                 const RegularizerConfig& cfg,
                                 std::mt19937_64& rng) {
  std::string prefix = "reg" + std::to_string(stage) + ".";
  ParamMap params;
  size_t layers = 2 + cfg.extra_layers;
  size_t cin = in_channels;
  for (size_t i = 1; i <= layers; ++i) {
    Shape k{cfg.channels, cin, 3, 3, 3};
    params.emplace(prefix + "c" + std::to_string(i) + ".w",
                   he_uniform(k, cin * 27, rng));
    params.emplace(prefix + "c" + std::to_string(i) + ".b",
                   Tensor::uniform({cfg.channels}, -0.02, 0.02, rng, true));
    cin = cfg.channels;
  }
  params.emplace(prefix + "proj.w",
                 he_uniform({1, cfg.channels, 1, 1, 1}, cfg.channels, rng));
  params.emplace(prefix + "proj.b", Tensor::uniform({1}, -0.02, 0.02, rng, true));
  return params;
}

Tensor regularize(const Tensor& variance, const ParamMap& params, size_t stage,
                  const RegularizerConfig& cfg) {
  if (variance.ndim() != 4) throw DataError("regularize: input must be [C,D,H,W]");
  for (double v : variance.data()) {
    if (!std::isfinite(v)) throw NumericError("regularize: non-finite input");
  }
  std::string prefix = "reg" + std::to_string(stage) + ".";
  size_t layers = 2 + cfg.extra_layers;
  Tensor x = conv3d(variance, param(params, prefix + "c1.w"),
                    param(params, prefix + "c1.b"), 1);
  for (size_t i = 2; i <= layers; ++i) {
    std::string name = prefix + "c" + std::to_string(i);
    x = conv3d(relu(x), param(params, name + ".w"), param(params, name + ".b"), 1);
  }
  Tensor score = conv3d(x, param(params, prefix + "proj.w"),
                        param(params, prefix + "proj.b"), 0);
  return reshape(score, {variance.dim(1), variance.dim(2), variance.dim(3)});
}

Tensor expected_depth(const Tensor& prob, const DepthHypotheses& hypotheses) {
  if (prob.shape() != hypotheses.values.shape()) {
    throw DataError("expected_depth: prob and hypotheses shapes differ");
  }
  return sum(mul(prob, hypotheses.values), {0});
}

std::vector<size_t> confidence_window_starts(const Tensor& prob) {
  size_t d = prob.dim(0);
  size_t plane = prob.dim(1) * prob.dim(2);
  size_t window = std::min<size_t>(4, d);
  const auto& p = prob.data();
  std::vector<size_t> starts(plane);
  for (size_t px = 0; px < plane; ++px) {
    size_t best = 0;
    double bv = p[px];
    for (size_t k = 1; k < d; ++k) {
      double v = p[k * plane + px];
      if (v > bv) {
        bv = v;
        best = k;
      }
    }
    size_t start = best > 0 ? best - 1 : 0;
    starts[px] = std::min(start, d - window);
  }
  return starts;
}

Tensor confidence_map(const Tensor& prob,
                      const std::vector<size_t>* frozen_starts) {
  if (prob.ndim() != 3) throw DataError("confidence_map: prob must be [D,H,W]");
  size_t d = prob.dim(0);
  size_t window = std::min<size_t>(4, d);
  std::vector<size_t> starts =
      frozen_starts ? *frozen_starts : confidence_window_starts(prob);
  return window_sum_along0(prob, starts, window);
}

ParamMap init_params(uint64_t seed, const PipelineConfig& cfg) {
  std::mt19937_64 rng(seed);
  ParamMap params = init_feature_params(cfg.features, rng);
  for (size_t s = 1; s <= 3; ++s) {
    ParamMap reg = init_regularizer_params(s, cfg.features.stage_channels[s - 1],
                                           cfg.regularizer, rng);
    params.insert(reg.begin(), reg.end());
  }
  return params;
}

FrozenCascade freeze_cascade(const CascadeResult& result) {
  FrozenCascade frozen;
  for (size_t s = 0; s < 3; ++s) {
    frozen.hypotheses[s] = result.stages[s].hypotheses;
    frozen.window_starts[s] = confidence_window_starts(result.stages[s].prob);
  }
  return frozen;
}

CascadeResult run_cascade(const std::vector<Tensor>& images,
                          const std::vector<Camera>& cameras,
                          const ParamMap& params, const PipelineConfig& cfg,
                          const FrozenCascade* frozen) {
  if (images.size() < 2) throw DataError("run_cascade: need N >= 2 views");
  if (images.size() != cameras.size()) {
    throw DataError("run_cascade: images/cameras count mismatch");
  }

  std::vector<FeaturePyramid> pyramids;
  pyramids.reserve(images.size());
  for (const auto& img : images) {
    pyramids.push_back(extract(img, params, cfg.features));
  }

  HypothesisConfig hcfg = cfg.hypotheses;
  hcfg.depth_min = cameras[0].depth_min;
  hcfg.depth_max = cameras[0].depth_max;

  CascadeResult result;
  Tensor prev_depth;
  for (size_t s = 0; s < 3; ++s) {
    double factor = 1.0 / static_cast<double>(1 << (2 - s));
    std::vector<Camera> cams;
    cams.reserve(cameras.size());
    for (const auto& cam : cameras) {
      cams.push_back(s == 2 ? cam : cam.scaled(factor));
    }
    const Tensor& ref_feat = pyramids[0].stages[s];
    size_t h = ref_feat.dim(1), w = ref_feat.dim(2);

    DepthHypotheses hyps;
    if (frozen) {
      hyps = frozen->hypotheses[s];
    } else if (s == 0) {
      hyps = make_hypotheses(1, nullptr, hcfg, h, w);
    } else {
      hyps = make_hypotheses(s + 1, &prev_depth, hcfg, h, w);
    }

    std::vector<WarpedFeatures> warped;
    warped.reserve(images.size() - 1);
    for (size_t v = 1; v < images.size(); ++v) {
      warped.push_back(
          warp_feature_map(pyramids[v].stages[s], hyps, cams[0], cams[v]));
    }

    CostVolumeBundle bundle;
    bundle.ref_features = ref_feat;
    for (auto& wf : warped) {
      bundle.warped.push_back(wf.volume);
      bundle.masks.push_back(wf.mask);
    }
    bundle.pixel_valid = any_source_valid(warped);
    bundle.variance = aggregate_variance(ref_feat, warped);
    Tensor score = regularize(bundle.variance, params, s + 1, cfg.regularizer);
    // hypotheses no source view observes carry no matching evidence; push
    // them out of the softmax instead of letting their zero variance look
    // like a perfect match
    {
      size_t d = hyps.depth_count();
      std::vector<double> bias(d * h * w, -30.0);
      for (const auto& wf : warped) {
        const auto& m = wf.mask.data();
        for (size_t i = 0; i < bias.size(); ++i) {
          if (m[i] > 0.0) bias[i] = 0.0;
        }
      }
      score = add(score, Tensor::from_data({d, h, w}, std::move(bias)));
    }
    bundle.prob = softmax(score, 0);
    bundle.hypotheses = hyps;
    bundle.depth = expected_depth(bundle.prob, hyps);
    bundle.confidence =
        confidence_map(bundle.prob, frozen ? &frozen->window_starts[s] : nullptr);
    bundle.validate();

    prev_depth = bundle.depth.detach();
    result.stages[s] = std::move(bundle);
  }
  return result;
}

}  // namespace mvs
