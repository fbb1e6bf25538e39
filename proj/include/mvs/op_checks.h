#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mvs/gradcheck.h"

namespace mvs {

struct OpCheck {
  std::string name;
  double tol;
  std::function<GradCheckReport(uint64_t)> fn;
};

/// Gradient checks for the differentiable pipeline stages (warp, cost-volume
/// aggregation, losses, full loss graph). Kept out of gradcheck.cpp so the
/// core harness does not depend on the pipeline modules.
const std::vector<OpCheck>& pipeline_gradchecks();

}  // namespace mvs
