#include "mvs/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mvs/errors.h"
#include "mvs/noise.h"

namespace mvs {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DataError("train config: lr must be positive");
  for (size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) {
      throw DataError("train config: milestones must be strictly increasing");
    }
  }
  if (views < 2) throw DataError("train config: views must be >= 2");
  if (epochs == 0) throw DataError("train config: epochs must be >= 1");
  loss.validate();
}

double learning_rate_at(const TrainConfig& cfg, size_t epoch) {
  double lr = cfg.learning_rate;
  for (size_t m : cfg.milestones) {
    if (m < epoch) lr *= cfg.lr_decay;
  }
  return lr;
}

AdamOptimizer::AdamOptimizer(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(ParamMap& params, double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    State& s = state_[name];
    size_t n = p.numel();
    if (s.m.size() != n) {
      s.m.assign(n, 0.0);
      s.v.assign(n, 0.0);
    }
    std::vector<double> g =
        p.has_grad() ? p.grad() : std::vector<double>(n, 0.0);
    std::vector<double> next = p.data();
    for (size_t i = 0; i < n; ++i) {
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = s.m[i] / bc1;
      double vhat = s.v[i] / bc2;
      next[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
    p = Tensor::from_data(p.shape(), std::move(next), true);
  }
}

namespace {

struct Sample {
  size_t scene;
  size_t ref;
};

// views for one sample: the reference plus its nearest neighbors
void gather_views(const SceneData& scene, size_t ref, size_t views,
                  std::vector<Tensor>* images, std::vector<Camera>* cams) {
  images->clear();
  cams->clear();
  images->push_back(scene.views[ref].image);
  cams->push_back(scene.views[ref].camera);
  const auto& nb = scene.views[ref].neighbors;
  if (nb.size() + 1 < views) {
    throw DataError("scene has too few views for the configured sample size");
  }
  for (size_t i = 0; i + 1 < views; ++i) {
    images->push_back(scene.views[nb[i]].image);
    cams->push_back(scene.views[nb[i]].camera);
  }
}

ParamMap detached_params(const ParamMap& params) {
  ParamMap out;
  for (const auto& [name, t] : params) out.emplace(name, t.detach(false));
  return out;
}

}  // namespace

TrainResult train(const std::vector<SceneData>& scenes, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir,
                  const ParamMap* initial_params) {
  cfg.validate();
  if (scenes.empty()) throw DataError("train: dataset is empty");
  for (const auto& s : scenes) {
    if (s.views.size() < cfg.views) {
      throw DataError("train: a scene has fewer views than views-per-sample");
    }
  }

  TrainResult result;
  result.params =
      initial_params ? *initial_params : init_params(cfg.seed, cfg.pipeline);
  AdamOptimizer opt;
  size_t step = 0;

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = learning_rate_at(cfg, epoch);

    std::vector<Sample> samples;
    for (size_t si = 0; si < scenes.size(); ++si) {
      size_t nviews = scenes[si].views.size();
      size_t refs = cfg.refs_per_scene == 0
                        ? nviews
                        : std::min(cfg.refs_per_scene, nviews);
      for (size_t j = 0; j < refs; ++j) {
        // rotate through reference views across epochs
        samples.push_back({si, (epoch - 1 + j) % nviews});
      }
    }
    std::mt19937_64 order_rng(hash_mix(cfg.seed * 1000003ull + epoch));
    std::shuffle(samples.begin(), samples.end(), order_rng);

    for (const Sample& sample : samples) {
      ++step;
      const SceneData& scene = scenes[sample.scene];
      std::vector<Tensor> images;
      std::vector<Camera> cams;
      gather_views(scene, sample.ref, cfg.views, &images, &cams);
      try {
        CascadeResult r = run_cascade(images, cams, result.params, cfg.pipeline);
        GroundTruthPack gt =
            make_gt_pack(scene.views[sample.ref].depth, r,
                         cams[0].depth_min, cams[0].depth_max);
        LossReport rep = total_loss(r, gt, cfg.loss);
        rep.total.backward();
        result.log.push_back(
            {step, rep.l1_sum(), rep.cml_sum(), rep.wfl_sum(), rep.total_value});
      } catch (const NumericError& e) {
        throw NumericError("training aborted at step " + std::to_string(step) +
                           ": " + e.what());
      }
      opt.step(result.params, lr);
    }

    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_epoch_%03zu.bin", epoch);
      save_params(out_dir / name, result.params);
    }
  }

  if (!out_dir.empty()) {
    save_params(out_dir / "final.bin", result.params);
    write_train_log(out_dir / "train_log.csv", result.log);
  }
  return result;
}

DepthMetricsResult evaluate_depth(const ParamMap& params,
                                  const std::vector<SceneData>& scenes,
                                  const PipelineConfig& pipeline, size_t views) {
  if (scenes.empty()) throw DataError("evaluate: dataset is empty");
  ParamMap frozen = detached_params(params);
  double total = 0.0;
  size_t n = 0, over1 = 0, over3 = 0;
  for (const auto& scene : scenes) {
    for (size_t ref = 0; ref < scene.views.size(); ++ref) {
      std::vector<Tensor> images;
      std::vector<Camera> cams;
      gather_views(scene, ref, views, &images, &cams);
      CascadeResult r = run_cascade(images, cams, frozen, pipeline);
      const Tensor& pred = r.stages[2].depth;
      const Tensor& gt = scene.views[ref].depth;
      for (size_t i = 0; i < gt.numel(); ++i) {
        double g = gt.data()[i];
        if (!(g >= cams[0].depth_min && g <= cams[0].depth_max)) continue;
        double err = std::abs(pred.data()[i] - g);
        total += err;
        ++n;
        if (err > 1.0) ++over1;
        if (err > 3.0) ++over3;
      }
    }
  }
  if (n == 0) throw DataError("evaluate: no valid pixels");
  DepthMetricsResult r;
  r.epe = total / static_cast<double>(n);
  r.e1 = 100.0 * static_cast<double>(over1) / static_cast<double>(n);
  r.e3 = 100.0 * static_cast<double>(over3) / static_cast<double>(n);
  return r;
}

std::vector<Prediction> predict_scene(const ParamMap& params,
                                      const SceneData& scene,
                                      const PipelineConfig& pipeline,
                                      size_t views) {
  ParamMap frozen = detached_params(params);
  std::vector<Prediction> out;
  for (size_t ref = 0; ref < scene.views.size(); ++ref) {
    std::vector<Tensor> images;
    std::vector<Camera> cams;
    gather_views(scene, ref, views, &images, &cams);
    CascadeResult r = run_cascade(images, cams, frozen, pipeline);
    out.push_back({r.stages[2].depth, r.stages[2].confidence});
  }
  return out;
}

void write_train_log(const std::filesystem::path& path,
                     const std::vector<TrainLogRow>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write train log: " + path.string());
  out << "step,l1,cml,wfl,total\n";
  for (const auto& row : log) {
    out << row.step << ',' << row.l1 << ',' << row.cml << ',' << row.wfl << ','
        << row.total << '\n';
  }
}

}  // namespace mvs
