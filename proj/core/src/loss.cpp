// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/loss.hpp"

#include "tcmgc/error.hpp"
#include "tcmgc/ops.hpp"

namespace tcmgc {

namespace {

std::size_t square_side(const Tensor& scores) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1)) {
    throw DimensionError("infonce: expected a square score grid, got " + shape_str(scores.shape()));
  }
  return scores.dim(0);
}

Tensor diagonal(const Tensor& grid) {
  const std::size_t b = grid.dim(0);
  IndexTensor idx{{b}, {}};
  for (std::size_t i = 0; i < b; ++i) idx.data.push_back(i * b + i);
  return gather(reshape(grid, {b * b}), idx, 0);
}

}  // namespace

SdrData parse_sdr_data(const std::string& text) {
  if (text == "positives") return SdrData::kPositives;
  if (text == "negatives") return SdrData::kNegatives;
  if (text == "all") return SdrData::kAll;
  throw ConfigError("unknown sdr_data '" + text + "' (expected positives, negatives or all)");
}

const char* to_string(SdrData data) {
  switch (data) {
    case SdrData::kPositives:
      return "positives";
    case SdrData::kNegatives:
      return "negatives";
    case SdrData::kAll:
      return "all";
  }
  return "positives";
}

Tensor infonce(const Tensor& scores, double lambda) {
  square_side(scores);
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  const Tensor t2v = mean(diagonal(log_softmax(scores, 1, lambda)), 0);
  const Tensor v2t = mean(diagonal(log_softmax(scores, 0, lambda)), 0);
  return scale(add(t2v, v2t), -1.0);
}

Tensor sdr(const Tensor& quads) {
  if (quads.rank() != 2) throw DimensionError("sdr: expected [N, 4] quads, got " + shape_str(quads.shape()));
  if (quads.dim(0) == 0) return Tensor::scalar(0.0);
  return mean(variance(quads, 1), 0);
}

Tensor select_quads(const Tensor& quad_grid, SdrData data) {
  if (quad_grid.rank() != 3 || quad_grid.dim(0) != quad_grid.dim(1)) {
    throw DimensionError("select_quads: expected [B, B, c], got " + shape_str(quad_grid.shape()));
  }
  const std::size_t b = quad_grid.dim(0);
  const std::size_t c = quad_grid.dim(2);
  const Tensor flat = reshape(quad_grid, {b * b, c});
  if (data == SdrData::kAll) return flat;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      if ((i == j) == (data == SdrData::kPositives)) rows.push_back(i * b + j);
    }
  }
  if (rows.empty()) return Tensor::zeros({0, c});
  IndexTensor idx{{rows.size(), c}, {}};
  for (auto r : rows) idx.data.insert(idx.data.end(), c, r);
  return gather(flat, idx, 0);
}

LossTerms total_loss(const Tensor& scores, const Tensor& quad_grid, const LossConfig& config) {
  if (config.alpha < 0.0) throw ConfigError("alpha must be non-negative");
  LossTerms terms;
  terms.infonce = infonce(scores, config.lambda);
  terms.sdr = sdr(select_quads(quad_grid, config.sdr_data));
  terms.total = config.alpha == 0.0 ? terms.infonce : add(terms.infonce, scale(terms.sdr, config.alpha));
  return terms;
}

}  // namespace tcmgc
