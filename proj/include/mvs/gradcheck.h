#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mvs/tensor.h"

namespace mvs {

struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t coords_checked = 0;
};

/// Compare the analytic gradient of a scalar-valued computation against
/// central finite differences (fp64). Per coordinate the error is
/// |analytic - numeric| / max(1, |analytic|, |numeric|), i.e. relative with
/// a unit floor so that near-zero gradients are compared absolutely.
///
/// `inputs` must be leaf tensors with requires_grad=true; `f` must be
/// deterministic. When max_coords_per_input > 0 a random subset of
/// coordinates is probed (rng required), otherwise every coordinate is.
GradCheckReport gradcheck(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double h = 1e-5,
    size_t max_coords_per_input = 0, std::mt19937_64* rng = nullptr);

struct OpCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Names of every registered differentiable-op check (includes the full
/// pipeline loss graph as "total_loss").
std::vector<std::string> gradcheck_op_names();

/// Run one named check over `seeds` random seeds; reports the worst error.
OpCheckResult run_gradcheck_op(const std::string& name, size_t seeds = 20);

std::vector<OpCheckResult> run_all_gradchecks(size_t seeds = 20);

}  // namespace mvs
