// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tcmgc/tensor.hpp"

namespace tcmgc {

/// Adam moments and hyperparameters. `first`/`second` align with the
/// parameter list passed to adam_step and are sized on the first update.
struct AdamState {
  double base_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Cosine schedule length in updates; the rate reaches 0 at step == horizon.
  std::uint64_t horizon = 1;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
};

/// base * 0.5 * (1 + cos(pi * step / horizon)), clamped to 0 past the horizon.
double cosine_rate(double base, std::uint64_t step, std::uint64_t horizon);

/// One bias-corrected Adam update of every tensor in `params` from its
/// accumulated gradient. Tensors holding no gradient are skipped.
/// Uses the schedule rate at the current step, then advances the step.
/// Returns the rate applied.
double adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace tcmgc
