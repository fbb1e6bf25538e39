#include "mvs/ablation.h"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include "mvs/errors.h"

namespace mvs {

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const char* losses_label(char row) {
  switch (row) {
    case 'a': return "l1";
    case 'b': return "l1+cml";
    case 'c': return "wfl";
    default: return "cml+wfl";
  }
}

}  // namespace

std::vector<AblationRowResult> run_ablation(
    const std::vector<SceneData>& train_scenes,
    const std::vector<SceneData>& eval_scenes, const AblationOptions& options) {
  if (options.seeds.empty()) throw DataError("ablation: need at least one seed");
  const std::string rows = "abcd";

  struct Job {
    char row;
    uint64_t seed;
  };
  std::vector<Job> jobs;
  for (char row : rows) {
    for (uint64_t seed : options.seeds) jobs.push_back({row, seed});
  }
  std::vector<DepthMetricsResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());

  size_t workers = options.threads == 0
                       ? std::max(1u, std::thread::hardware_concurrency())
                       : options.threads;
  workers = std::min(workers, jobs.size());

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
      try {
        TrainConfig cfg = options.base;
        cfg.seed = jobs[i].seed;
        cfg.loss = LossConfig::ablation_row(jobs[i].row);
        TrainResult trained = train(train_scenes, cfg);
        results[i] =
            evaluate_depth(trained.params, eval_scenes, cfg.pipeline, cfg.views);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }

  std::vector<AblationRowResult> out;
  for (size_t r = 0; r < rows.size(); ++r) {
    AblationRowResult row;
    row.row = rows[r];
    row.losses = losses_label(rows[r]);
    std::vector<double> epe, e1, e3;
    for (size_t s = 0; s < options.seeds.size(); ++s) {
      const auto& m = results[r * options.seeds.size() + s];
      row.per_seed.push_back(m);
      epe.push_back(m.epe);
      e1.push_back(m.e1);
      e3.push_back(m.e3);
    }
    row.median.epe = median_of(epe);
    row.median.e1 = median_of(e1);
    row.median.e3 = median_of(e3);
    out.push_back(std::move(row));
  }
  return out;
}

void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationRowResult>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ablation csv: " + path.string());
  out << "row,losses,epe,e1,e3\n";
  for (const auto& r : rows) {
    out << r.row << ',' << r.losses << ',' << r.median.epe << ',' << r.median.e1
        << ',' << r.median.e3 << '\n';
  }
}

std::pair<std::vector<SceneData>, std::vector<SceneData>> load_scene_split(
    const std::filesystem::path& root) {
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() &&
        std::filesystem::exists(entry.path() / "manifest.txt")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) {
    throw DataError("no scene directories (with manifest.txt) under " +
                    root.string());
  }
  std::vector<SceneData> train, eval;
  for (const auto& dir : dirs) {
    SceneData data = load_dataset(dir);
    if (dir.filename().string().starts_with("eval")) {
      eval.push_back(std::move(data));
    } else {
      train.push_back(std::move(data));
    }
  }
  return {std::move(train), std::move(eval)};
}

}  // namespace mvs
