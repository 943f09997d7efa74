// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "tcmgc/tensor.hpp"

namespace tcmgc {

/// 1 + the number of scores strictly greater than scores[truth].
std::size_t rank_of_truth(std::span<const double> scores, std::size_t truth);

struct DirectionMetrics {
  double r1 = 0, r5 = 0, r10 = 0;  // percentages
  double mdr = 0, mnr = 0;         // median and mean rank
  double rsum = 0;
};

DirectionMetrics summarize_ranks(std::span<const std::size_t> ranks);

struct MetricsReport {
  DirectionMetrics t2v;
  DirectionMetrics v2t;
  double sumr = 0;

  /// `key = value` lines with four decimals, in a fixed key order.
  std::string to_text() const;
};

/// `grid` is [Bt, Bv] with texts on rows. `video_of_text[i]` names the
/// matching column of row i and must be a bijection onto the columns.
MetricsReport evaluate(const Tensor& grid, std::span<const std::size_t> video_of_text);
/// Diagonal ground truth.
MetricsReport evaluate(const Tensor& grid);

}  // namespace tcmgc
