#pragma once

#include <filesystem>

#include "mvs/trainer.h"

namespace mvs {

struct AblationOptions {
  std::vector<uint64_t> seeds{1, 2, 3};
  TrainConfig base;    // loss settings are overridden per row
  size_t threads = 0;  // 0 = hardware concurrency
};

struct AblationRowResult {
  char row = 'a';
  std::string losses;
  std::vector<DepthMetricsResult> per_seed;
  DepthMetricsResult median;  // elementwise median over seeds
};

/// Train rows (a) L1, (b) L1+CML, (c) WFL, (d) CML+WFL on the training
/// scenes for every seed, evaluate depth on the held-out scenes, and reduce
/// per row by the median over seeds. Jobs run in parallel; results are
/// deterministic regardless of thread count.
std::vector<AblationRowResult> run_ablation(
    const std::vector<SceneData>& train_scenes,
    const std::vector<SceneData>& eval_scenes, const AblationOptions& options);

void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationRowResult>& rows);

/// Load scene directories under root; names starting with "eval" go to the
/// second list.
std::pair<std::vector<SceneData>, std::vector<SceneData>> load_scene_split(
    const std::filesystem::path& root);

}  // namespace mvs
