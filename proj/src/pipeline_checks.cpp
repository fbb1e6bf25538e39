#include <cmath>

#include "mvs/losses.h"
#include "mvs/matching.h"
#include "mvs/op_checks.h"
#include "mvs/warp.h"

namespace mvs {

namespace {

Camera tiny_camera(double f, double cx, double cy, const Eigen::Vector3d& t,
                   double rot_y_rad, double dmin, double dmax) {
  Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
  k(0, 0) = k(1, 1) = f;
  k(0, 2) = cx;
  k(1, 2) = cy;
  Eigen::Matrix3d r =
      Eigen::AngleAxisd(rot_y_rad, Eigen::Vector3d::UnitY()).toRotationMatrix();
  return Camera(k, r, t, dmin, dmax);
}

Tensor probe_sum(const Tensor& t, std::mt19937_64& rng) {
  Tensor w = Tensor::uniform(t.shape(), -1.0, 1.0, rng);
  return sum(mul(t, w));
}

GradCheckReport check_warp(uint64_t seed) {
  std::mt19937_64 rng(seed * 31337 + 5);
  Tensor feat = Tensor::uniform({2, 6, 6}, -1.0, 1.0, rng, true);
  Camera ref = tiny_camera(12, 2.5, 2.5, Eigen::Vector3d::Zero(), 0.0, 1.0, 4.0);
  Camera src = tiny_camera(12, 2.5, 2.5, Eigen::Vector3d(0.13, 0.05, 0.02),
                           0.06, 1.0, 4.0);
  DepthHypotheses hyp = make_uniform_hypotheses(3, 1.0, 4.0, 6, 6);
  Tensor w = Tensor::uniform({2, 3, 6, 6}, -1.0, 1.0, rng);
  auto f = [&, w](const std::vector<Tensor>& in) {
    return sum(mul(warp_feature_map(in[0], hyp, ref, src).volume, w));
  };
  return gradcheck(f, {feat});
}

GradCheckReport check_variance(uint64_t seed) {
  std::mt19937_64 rng(seed * 271 + 9);
  Tensor ref = Tensor::uniform({2, 3, 3}, -1.0, 1.0, rng, true);
  Tensor v1 = Tensor::uniform({2, 4, 3, 3}, -1.0, 1.0, rng, true);
  Tensor v2 = Tensor::uniform({2, 4, 3, 3}, -1.0, 1.0, rng, true);
  std::vector<double> m1(36), m2(36);
  for (auto& m : m1) m = rng() % 4 ? 1.0 : 0.0;
  for (auto& m : m2) m = rng() % 4 ? 1.0 : 0.0;
  Tensor mask1 = Tensor::from_data({4, 3, 3}, m1);
  Tensor mask2 = Tensor::from_data({4, 3, 3}, m2);
  std::mt19937_64 wrng(seed + 1);
  Tensor w = Tensor::uniform({2, 4, 3, 3}, -1.0, 1.0, wrng);
  auto f = [mask1, mask2, w](const std::vector<Tensor>& in) {
    std::vector<WarpedFeatures> warped{{in[1], mask1}, {in[2], mask2}};
    return sum(mul(aggregate_variance(in[0], warped), w));
  };
  return gradcheck(f, {ref, v1, v2});
}

GradCheckReport check_regularize(uint64_t seed) {
  std::mt19937_64 rng(seed * 911 + 3);
  RegularizerConfig rc;
  rc.channels = 3;
  ParamMap params = init_regularizer_params(1, 2, rc, rng);
  Tensor var = Tensor::uniform({2, 3, 3, 3}, 0.0, 1.0, rng, true);
  std::vector<Tensor> inputs{var};
  std::vector<std::string> names;
  for (auto& [name, t] : params) {
    names.push_back(name);
    inputs.push_back(t);
  }
  Tensor w = Tensor::uniform({3, 3, 3}, -1.0, 1.0, rng);
  auto f = [names, rc, w](const std::vector<Tensor>& in) {
    ParamMap p;
    for (size_t i = 0; i < names.size(); ++i) p.emplace(names[i], in[i + 1]);
    return sum(mul(regularize(in[0], p, 1, rc), w));
  };
  return gradcheck(f, inputs);
}

GradCheckReport check_expected_depth(uint64_t seed) {
  std::mt19937_64 rng(seed * 613 + 21);
  Tensor score = Tensor::uniform({5, 3, 3}, -2.0, 2.0, rng, true);
  DepthHypotheses hyp = make_uniform_hypotheses(5, 2.0, 4.0, 3, 3);
  Tensor w = Tensor::uniform({3, 3}, -1.0, 1.0, rng);
  auto f = [hyp, w](const std::vector<Tensor>& in) {
    return sum(mul(expected_depth(softmax(in[0], 0), hyp), w));
  };
  return gradcheck(f, {score});
}

GradCheckReport check_confidence(uint64_t seed) {
  std::mt19937_64 rng(seed * 1013 + 7);
  Tensor score = Tensor::uniform({6, 3, 3}, -2.0, 2.0, rng, true);
  // pin the argmax windows so the checked function is the smooth restriction
  std::vector<size_t> starts = confidence_window_starts(softmax(score, 0));
  Tensor w = Tensor::uniform({3, 3}, -1.0, 1.0, rng);
  auto f = [starts, w](const std::vector<Tensor>& in) {
    return sum(mul(confidence_map(softmax(in[0], 0), &starts), w));
  };
  return gradcheck(f, {score});
}

GradCheckReport check_similarity(uint64_t seed) {
  std::mt19937_64 rng(seed * 139 + 1);
  Tensor a = Tensor::uniform({6}, -1.0, 1.0, rng, true);
  Tensor b = Tensor::uniform({6}, -1.0, 1.0, rng, true);
  auto f = [](const std::vector<Tensor>& in) { return similarity(in[0], in[1]); };
  return gradcheck(f, {a, b});
}

// Small synthetic bundle whose features are the checked leaves.
GradCheckReport check_cml(uint64_t seed) {
  std::mt19937_64 rng(seed * 347 + 11);
  const size_t c = 2, d = 4, h = 2, w = 3;
  Tensor ref = Tensor::uniform({c, h, w}, -1.0, 1.0, rng, true);
  Tensor vol1 = Tensor::uniform({c, d, h, w}, -1.0, 1.0, rng, true);
  Tensor vol2 = Tensor::uniform({c, d, h, w}, -1.0, 1.0, rng, true);
  std::vector<size_t> idx(h * w);
  for (auto& v : idx) v = rng() % d;
  Tensor valid = Tensor::full({h, w}, 1.0);
  auto f = [=](const std::vector<Tensor>& in) {
    CostVolumeBundle b;
    b.ref_features = in[0];
    b.warped = {in[1], in[2]};
    b.masks = {Tensor::full({d, h, w}, 1.0), Tensor::full({d, h, w}, 1.0)};
    b.pixel_valid = Tensor::full({h, w}, 1.0);
    b.hypotheses = make_uniform_hypotheses(d, 1.0, 4.0, h, w);
    return cml(b, valid, idx);
  };
  return gradcheck(f, {ref, vol1, vol2});
}

GradCheckReport check_wfl(uint64_t seed) {
  std::mt19937_64 rng(seed * 733 + 17);
  const size_t d = 5, h = 2, w = 2;
  Tensor score = Tensor::uniform({d, h, w}, -2.0, 2.0, rng, true);
  std::vector<size_t> idx(h * w);
  for (auto& v : idx) v = rng() % d;
  std::vector<size_t> starts = confidence_window_starts(softmax(score, 0));
  Tensor valid = Tensor::full({h, w}, 1.0);
  LossConfig cfg;
  cfg.stop_gradient_on_weight = false;  // check the fully differentiable reading
  auto f = [=](const std::vector<Tensor>& in) {
    Tensor prob = softmax(in[0], 0);
    CascadeResult r;
    for (size_t s = 0; s < 3; ++s) {
      CostVolumeBundle b;
      b.prob = prob;
      b.confidence = confidence_map(prob, &starts);
      b.pixel_valid = Tensor::full({h, w}, 1.0);
      b.hypotheses = make_uniform_hypotheses(d, 1.0, 4.0, h, w);
      b.ref_features = Tensor::full({1, h, w}, 0.0);
      b.depth = Tensor::full({h, w}, 1.0);
      r.stages[s] = std::move(b);
    }
    return wfl(r, 2, valid, idx, cfg);
  };
  return gradcheck(f, {score});
}

GradCheckReport check_l1(uint64_t seed) {
  std::mt19937_64 rng(seed * 157 + 23);
  Tensor gt = Tensor::uniform({3, 3}, 2.0, 4.0, rng);
  // keep |pred - gt| away from the absolute-value kink
  std::vector<double> pd(9);
  std::uniform_real_distribution<double> off(0.1, 0.8);
  for (size_t i = 0; i < 9; ++i) {
    pd[i] = gt.data()[i] + (rng() % 2 ? off(rng) : -off(rng));
  }
  Tensor pred = Tensor::from_data({3, 3}, pd, true);
  Tensor valid = Tensor::full({3, 3}, 1.0);
  auto f = [gt, valid](const std::vector<Tensor>& in) {
    return l1_loss(in[0], gt, valid);
  };
  return gradcheck(f, {pred});
}

// Full pipeline: loss of a real (tiny) cascade with respect to every model
// parameter, probing a random coordinate subset per parameter. Hypotheses
// and confidence windows are frozen at the base point so finite differences
// probe the same restriction the analytic gradient computes; the weight map
// keeps its gradient (stop_gradient disabled) for the same reason.
GradCheckReport check_total_loss(uint64_t seed) {
  std::mt19937_64 rng(seed * 4099 + 2);
  PipelineConfig cfg;
  cfg.features.base_channels = 4;
  cfg.features.stage_channels = {4, 4, 2};
  cfg.regularizer.channels = 4;
  cfg.hypotheses.counts = {4, 3, 2};

  std::vector<Tensor> images{Tensor::uniform({3, 8, 8}, 0.0, 1.0, rng),
                             Tensor::uniform({3, 8, 8}, 0.0, 1.0, rng)};
  std::vector<Camera> cameras;
  cameras.push_back(tiny_camera(10, 3.5, 3.5, Eigen::Vector3d::Zero(), 0.0, 1.5, 3.0));
  cameras.push_back(
      tiny_camera(10, 3.5, 3.5, Eigen::Vector3d(0.12, 0.05, 0.0), 0.03, 1.5, 3.0));
  ParamMap params = init_params(seed, cfg);

  CascadeResult base = run_cascade(images, cameras, params, cfg);
  FrozenCascade frozen = freeze_cascade(base);

  // Nudge the ground truth until no pixel sits on the |depth - gt| kink at
  // any stage; finite differences would otherwise straddle it.
  Tensor gt_depth;
  {
    Tensor gt0 = Tensor::uniform({8, 8}, 2.0, 2.5, rng);
    for (int attempt = 0; attempt < 40; ++attempt) {
      Tensor cand = add_scalar(gt0, 7e-4 * attempt).detach();
      GroundTruthPack pack = make_gt_pack(cand, base, 1.5, 3.0);
      double margin = 1e18;
      for (size_t s = 0; s < 3; ++s) {
        const auto& dep = base.stages[s].depth.data();
        const auto& g = pack.gt_depth[s].data();
        for (size_t p = 0; p < dep.size(); ++p) {
          margin = std::min(margin, std::abs(dep[p] - g[p]));
        }
      }
      if (margin > 2e-4) {
        gt_depth = cand;
        break;
      }
    }
    if (!gt_depth.defined()) gt_depth = gt0;
  }

  LossConfig loss_cfg;
  loss_cfg.enable_l1 = true;
  loss_cfg.enable_cml = true;
  loss_cfg.enable_wfl = true;
  loss_cfg.stop_gradient_on_weight = false;

  std::vector<std::string> names;
  std::vector<Tensor> inputs;
  for (auto& [name, t] : params) {
    names.push_back(name);
    inputs.push_back(t);
  }
  auto f = [&, names](const std::vector<Tensor>& in) {
    ParamMap p;
    for (size_t i = 0; i < names.size(); ++i) p.emplace(names[i], in[i]);
    CascadeResult r = run_cascade(images, cameras, p, cfg, &frozen);
    GroundTruthPack gt = make_gt_pack(gt_depth, r, 1.5, 3.0);
    return total_loss(r, gt, loss_cfg).total;
  };
  return gradcheck(f, inputs, 1e-5, 3, &rng);
}

}  // namespace

const std::vector<OpCheck>& pipeline_gradchecks() {
  static const std::vector<OpCheck> reg = [] {
    std::vector<OpCheck> v;
    v.push_back({"warp", 1e-5, check_warp});
    v.push_back({"variance", 1e-5, check_variance});
    v.push_back({"regularize", 1e-5, check_regularize});
    v.push_back({"expected_depth", 1e-5, check_expected_depth});
    v.push_back({"confidence", 1e-5, check_confidence});
    v.push_back({"similarity", 1e-6, check_similarity});
    v.push_back({"cml", 1e-5, check_cml});
    v.push_back({"wfl", 1e-5, check_wfl});
    v.push_back({"l1", 1e-5, check_l1});
    v.push_back({"total_loss", 1e-4, check_total_loss});
    return v;
  }();
  return reg;
}

}  // namespace mvs
