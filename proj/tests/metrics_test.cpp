// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "support.hpp"
#include "tcmgc/error.hpp"
#include "tcmgc/metrics.hpp"

namespace tcmgc {
namespace {

// Rank by full sort: position of the truth after ordering candidates by
// descending score, with ties resolved in the truth's favor.
std::size_t rank_by_sort(std::vector<double> scores, std::size_t truth) {
  const double target = scores[truth];
  std::sort(scores.begin(), scores.end(), std::greater<>());
  return static_cast<std::size_t>(std::find(scores.begin(), scores.end(), target) - scores.begin()) + 1;
}

DirectionMetrics summarize_ref(std::vector<std::size_t> ranks) {
  DirectionMetrics m;
  const double n = static_cast<double>(ranks.size());
  for (auto r : ranks) {
    m.r1 += r <= 1;
    m.r5 += r <= 5;
    m.r10 += r <= 10;
    m.mnr += static_cast<double>(r);
  }
  m.r1 *= 100 / n;
  m.r5 *= 100 / n;
  m.r10 *= 100 / n;
  m.mnr /= n;
  std::sort(ranks.begin(), ranks.end());
  const std::size_t h = ranks.size() / 2;
  m.mdr = ranks.size() % 2 ? static_cast<double>(ranks[h]) : (ranks[h - 1] + ranks[h]) / 2.0;
  m.rsum = m.r1 + m.r5 + m.r10;
  return m;
}

void expect_same(const DirectionMetrics& a, const DirectionMetrics& b) {
  EXPECT_NEAR(a.r1, b.r1, 1e-12);
  EXPECT_NEAR(a.r5, b.r5, 1e-12);
  EXPECT_NEAR(a.r10, b.r10, 1e-12);
  EXPECT_NEAR(a.mdr, b.mdr, 1e-12);
  EXPECT_NEAR(a.mnr, b.mnr, 1e-12);
  EXPECT_NEAR(a.rsum, b.rsum, 1e-12);
}

TEST(RankOfTruth, Examples) {
  const std::vector<double> s{0.9, 0.5, 0.7, 0.1};
  EXPECT_EQ(rank_of_truth(s, 2), 2u);
  EXPECT_EQ(rank_of_truth(s, 0), 1u);
  EXPECT_EQ(rank_of_truth(std::vector<double>{0.5, 0.5, 0.5}, 2), 1u);
  EXPECT_THROW(rank_of_truth(s, 4), BoundsError);
}

TEST(SummarizeRanks, Examples) {
  const std::vector<std::size_t> ranks{1, 2, 6, 20};
  const DirectionMetrics m = summarize_ranks(ranks);
  EXPECT_DOUBLE_EQ(m.r1, 25);
  EXPECT_DOUBLE_EQ(m.r5, 50);
  EXPECT_DOUBLE_EQ(m.r10, 75);
  EXPECT_DOUBLE_EQ(m.mdr, 4);
  EXPECT_DOUBLE_EQ(m.mnr, 7.25);
  EXPECT_DOUBLE_EQ(m.rsum, 150);
  EXPECT_DOUBLE_EQ(summarize_ranks(std::vector<std::size_t>{3, 1, 2}).mdr, 2);
  EXPECT_THROW(summarize_ranks(std::vector<std::size_t>{}), DegenerateError);
}

TEST(Evaluate, MatchesSortOracleOnRandomGrids) {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 100;
    const Tensor grid = trial % 2 ? testing::tie_heavy_tensor(rng, {n, n}, 6) : testing::random_tensor(rng, {n, n});
    std::vector<std::size_t> truth(n);
    std::iota(truth.begin(), truth.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(truth[i - 1], truth[rng.below(i)]);
    const auto v = testing::values(grid);
    std::vector<std::size_t> t2v(n), v2t(n);
    for (std::size_t i = 0; i < n; ++i) {
      t2v[i] = rank_by_sort({v.begin() + i * n, v.begin() + (i + 1) * n}, truth[i]);
      std::vector<double> col(n);
      for (std::size_t r = 0; r < n; ++r) col[r] = v[r * n + truth[i]];
      v2t[truth[i]] = rank_by_sort(col, i);
    }
    const MetricsReport report = evaluate(grid, truth);
    expect_same(report.t2v, summarize_ref(t2v));
    expect_same(report.v2t, summarize_ref(v2t));
    EXPECT_NEAR(report.sumr, report.t2v.rsum + report.v2t.rsum, 1e-12);
  }
}

TEST(Evaluate, PermutingCandidatesConsistentlyChangesNothing) {
  Rng rng(2);
  const std::size_t n = 30;
  const Tensor grid = testing::random_tensor(rng, {n, n});
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<double> shuffled(n * n);
  const auto v = testing::values(grid);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) shuffled[i * n + perm[j]] = v[i * n + j];
  EXPECT_EQ(evaluate(grid).to_text(), evaluate(Tensor::from({n, n}, shuffled), perm).to_text());
}

TEST(Evaluate, RaisingTheTruthNeverHurts) {
  Rng rng(3);
  const std::size_t n = 20;
  for (int trial = 0; trial < 50; ++trial) {
    auto v = testing::values(testing::random_tensor(rng, {n, n}));
    const MetricsReport before = evaluate(Tensor::from({n, n}, v));
    const std::size_t i = rng.below(n);
    v[i * n + i] += rng.uniform(0, 1);
    const MetricsReport after = evaluate(Tensor::from({n, n}, v));
    EXPECT_GE(after.t2v.rsum, before.t2v.rsum);
    EXPECT_LE(after.t2v.mnr, before.t2v.mnr);
    EXPECT_GE(after.v2t.rsum, before.v2t.rsum);
  }
}

TEST(Evaluate, RejectsBadTruth) {
  const Tensor grid = Tensor::zeros({3, 3});
  EXPECT_THROW(evaluate(grid, std::vector<std::size_t>{0, 1}), PairingError);
  EXPECT_THROW(evaluate(grid, std::vector<std::size_t>{0, 1, 1}), PairingError);
  EXPECT_THROW(evaluate(grid, std::vector<std::size_t>{0, 1, 3}), BoundsError);
  EXPECT_THROW(evaluate(Tensor::zeros({3})), DimensionError);
}

TEST(MetricsReport, KeyOrderAndFormat) {
  const MetricsReport report = evaluate(Tensor::from({2, 2}, {1, 0, 0, 1}));
  std::istringstream in(report.to_text());
  std::vector<std::string> keys;
  for (std::string line; std::getline(in, line);) keys.push_back(line.substr(0, line.find(' ')));
  const std::vector<std::string> expected{"t2v.r1", "t2v.r5", "t2v.r10", "t2v.mdr", "t2v.mnr", "t2v.rsum", "v2t.r1",
                                          "v2t.r5", "v2t.r10", "v2t.mdr", "v2t.mnr", "v2t.rsum", "sumr"};
  EXPECT_EQ(keys, expected);
  EXPECT_NE(report.to_text().find("t2v.r1 = 100.0000\n"), std::string::npos);
  EXPECT_NE(report.to_text().find("sumr = 600.0000\n"), std::string::npos);
}

}  // namespace
}  // namespace tcmgc
