// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "tcmgc/tensor.hpp"

namespace tcmgc {

/// Which pairs the variance regularizer is computed over.
enum class SdrData { kPositives, kNegatives, kAll };

SdrData parse_sdr_data(const std::string& text);
const char* to_string(SdrData data);

struct LossConfig {
  double lambda = 100.0;  // multiplies scores inside the contrastive softmax
  double alpha = 0.5;     // weight of the variance regularizer
  SdrData sdr_data = SdrData::kPositives;
};

/// Symmetric contrastive loss over a square [B, B] grid whose diagonal holds
/// the matching pairs: text-to-video rows plus video-to-text columns.
Tensor infonce(const Tensor& scores, double lambda);

/// Mean over rows of the population variance of each [N, 4] quad.
Tensor sdr(const Tensor& quads);

/// Rows of a [B, B, 4] quad grid selected by `data`, as [N, 4].
Tensor select_quads(const Tensor& quad_grid, SdrData data);

struct LossTerms {
  Tensor infonce;
  Tensor sdr;
  Tensor total;
};

LossTerms total_loss(const Tensor& scores, const Tensor& quad_grid, const LossConfig& config);

}  // namespace tcmgc
