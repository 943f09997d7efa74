// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tcmgc/tensor.hpp"

namespace tcmgc {

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is zero from dividing roundoff by roundoff.
inline constexpr double kGradcheckFloor = 1e-5;
double relative_error(double analytic, double numeric, double floor = kGradcheckFloor);

struct GradientComparison {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

/// Runs backward() on `loss()` and compares the gradient of every entry of
/// every tensor in `inputs` against central differences with step `h`.
/// Inputs must be leaves with requires_grad set.
GradientComparison compare_gradients(const std::function<Tensor()>& loss, std::span<Tensor> inputs,
                                     double h = 1e-5);

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t dim = 8;       // feature width of the composite checks
  std::size_t instances = 20;  // random instances per elementwise or tensor op
  double h = 1e-5;
  double tolerance = 1e-4;
  // Temperature for the contrastive checks. At 100 the third derivative is
  // large enough that the central-difference truncation alone nears 1e-4.
  double lambda = 10.0;
};

struct ComponentReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  bool passed = false;
};

/// Every differentiable op, every pipeline stage, and the end-to-end
/// training loss on a 4-pair batch with 6 words and 4 frames.
std::vector<ComponentReport> run_gradcheck(const GradcheckOptions& options);

}  // namespace tcmgc
