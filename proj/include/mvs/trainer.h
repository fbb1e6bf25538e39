#pragma once

#include <filesystem>

#include "mvs/losses.h"
#include "mvs/matching.h"
#include "mvs/metrics.h"
#include "mvs/scenes.h"

namespace mvs {

struct TrainConfig {
  size_t epochs = 16;
  double learning_rate = 1e-3;
  std::vector<size_t> milestones{8, 10, 12};  // lr halves after these epochs
  double lr_decay = 0.5;
  uint64_t seed = 1;
  size_t views = 3;           // views per sample (reference + neighbors)
  size_t refs_per_scene = 1;  // reference views per scene per epoch; 0 = all
  PipelineConfig pipeline;
  LossConfig loss;

  void validate() const;
};

/// Learning rate during a 1-based epoch under the milestone schedule.
double learning_rate_at(const TrainConfig& cfg, size_t epoch);

/// Adam with bias correction; parameters are replaced by fresh tensors each
/// step (tensors are immutable values).
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);
  void step(ParamMap& params, double lr);

 private:
  struct State {
    std::vector<double> m, v;
  };
  std::map<std::string, State> state_;
  size_t t_ = 0;
  double beta1_, beta2_, eps_;
};

struct TrainLogRow {
  size_t step = 0;
  double l1 = 0.0, cml = 0.0, wfl = 0.0, total = 0.0;
};

struct TrainResult {
  ParamMap params;
  std::vector<TrainLogRow> log;
};

/// Deterministic training loop: per-scene (batch size 1) steps in an order
/// fixed by the seed, checkpoints per epoch when out_dir is given. Raises
/// NumericError naming the step if the loss goes non-finite.
TrainResult train(const std::vector<SceneData>& scenes, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir = {},
                  const ParamMap* initial_params = nullptr);

/// Stage-3 depth vs ground truth over every (scene, reference view) pair,
/// pixel-pooled.
DepthMetricsResult evaluate_depth(const ParamMap& params,
                                  const std::vector<SceneData>& scenes,
                                  const PipelineConfig& pipeline, size_t views);

struct Prediction {
  Tensor depth;       // [H,W], stage 3
  Tensor confidence;  // [H,W], stage 3
};

/// Run the cascade once per reference view of one scene.
std::vector<Prediction> predict_scene(const ParamMap& params,
                                      const SceneData& scene,
                                      const PipelineConfig& pipeline,
                                      size_t views);

void write_train_log(const std::filesystem::path& path,
                     const std::vector<TrainLogRow>& log);

}  // namespace mvs
