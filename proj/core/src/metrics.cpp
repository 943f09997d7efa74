// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "tcmgc/error.hpp"

namespace tcmgc {

std::size_t rank_of_truth(std::span<const double> scores, std::size_t truth) {
  if (truth >= scores.size()) {
    throw BoundsError("truth index " + std::to_string(truth) + " outside " + std::to_string(scores.size()) +
                      " candidates");
  }
  const double target = scores[truth];
  return 1 + static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(),
                                                    [target](double s) { return s > target; }));
}

DirectionMetrics summarize_ranks(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw DegenerateError("no queries to evaluate");
  const double n = static_cast<double>(ranks.size());
  auto recall = [&](std::size_t k) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
    return 100.0 * static_cast<double>(hits) / n;
  };
  DirectionMetrics m;
  m.r1 = recall(1);
  m.r5 = recall(5);
  m.r10 = recall(10);
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  m.mdr = sorted.size() % 2 ? static_cast<double>(sorted[mid])
                            : 0.5 * static_cast<double>(sorted[mid - 1] + sorted[mid]);
  m.mnr = static_cast<double>(std::accumulate(sorted.begin(), sorted.end(), std::size_t{0})) / n;
  m.rsum = m.r1 + m.r5 + m.r10;
  return m;
}

std::string MetricsReport::to_text() const {
  std::string out;
  char line[96];
  auto emit = [&](const char* key, double value) {
    std::snprintf(line, sizeof line, "%s = %.4f\n", key, value);
    out += line;
  };
  const std::pair<const char*, const DirectionMetrics*> dirs[] = {{"t2v", &t2v}, {"v2t", &v2t}};
  for (const auto& [prefix, d] : dirs) {
    const std::string p(prefix);
    emit((p + ".r1").c_str(), d->r1);
    emit((p + ".r5").c_str(), d->r5);
    emit((p + ".r10").c_str(), d->r10);
    emit((p + ".mdr").c_str(), d->mdr);
    emit((p + ".mnr").c_str(), d->mnr);
    emit((p + ".rsum").c_str(), d->rsum);
  }
  emit("sumr", sumr);
  return out;
}

MetricsReport evaluate(const Tensor& grid, std::span<const std::size_t> video_of_text) {
  if (grid.rank() != 2) throw DimensionError("evaluate: expected a [texts, videos] grid");
  const std::size_t rows = grid.dim(0);
  const std::size_t cols = grid.dim(1);
  if (video_of_text.size() != rows) {
    throw PairingError("truth mapping covers " + std::to_string(video_of_text.size()) + " of " +
                       std::to_string(rows) + " texts");
  }
  std::vector<std::size_t> text_of_video(cols, rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t j = video_of_text[i];
    if (j >= cols) throw BoundsError("truth video " + std::to_string(j) + " outside " + std::to_string(cols));
    if (text_of_video[j] != rows) throw PairingError("video " + std::to_string(j) + " matched by several texts");
    text_of_video[j] = i;
  }
  for (std::size_t j = 0; j < cols; ++j) {
    if (text_of_video[j] == rows) throw PairingError("video " + std::to_string(j) + " has no matching text");
  }

  const auto values = grid.data();
  std::vector<std::size_t> t2v(rows);
  for (std::size_t i = 0; i < rows; ++i) t2v[i] = rank_of_truth(values.subspan(i * cols, cols), video_of_text[i]);
  std::vector<std::size_t> v2t(cols);
  std::vector<double> column(rows);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) column[i] = values[i * cols + j];
    v2t[j] = rank_of_truth(column, text_of_video[j]);
  }
  MetricsReport report;
  report.t2v = summarize_ranks(t2v);
  report.v2t = summarize_ranks(v2t);
  report.sumr = report.t2v.rsum + report.v2t.rsum;
  return report;
}

MetricsReport evaluate(const Tensor& grid) {
  if (grid.rank() != 2) throw DimensionError("evaluate: expected a [texts, videos] grid");
  std::vector<std::size_t> diag(grid.dim(0));
  std::iota(diag.begin(), diag.end(), std::size_t{0});
  return evaluate(grid, diag);
}

}  // namespace tcmgc
