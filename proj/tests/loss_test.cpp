// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "tcmgc/autograd.hpp"
#include "tcmgc/error.hpp"
#include "tcmgc/loss.hpp"
#include "tcmgc/ops.hpp"

namespace tcmgc {
namespace {

using testing::random_tensor;

// Direct log-sum-exp over rows and columns.
double infonce_ref(const Tensor& s, double lambda) {
  const std::size_t b = s.dim(0);
  double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    double row = 0, col = 0;
    for (std::size_t j = 0; j < b; ++j) {
      row += std::exp(lambda * (s.at({i, j}) - s.at({i, i})));
      col += std::exp(lambda * (s.at({j, i}) - s.at({i, i})));
    }
    total += std::log(row) + std::log(col);
  }
  return total / static_cast<double>(b);
}

TEST(Infonce, Examples) {
  EXPECT_NEAR(infonce(Tensor::full({4, 4}, 0.3), 100.0).item(), 2 * std::log(4.0), 1e-12);
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  EXPECT_NEAR(infonce(eye, 1.0).item(), 2 * std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(infonce(eye, 1.0).item(), 0.6265, 1e-4);
  EXPECT_THROW(infonce(Tensor::zeros({2, 3}), 1.0), DimensionError);
  EXPECT_THROW(infonce(eye, 0.0), ConfigError);
}

TEST(Infonce, MatchesOracleAndIsShiftInvariant) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = testing::random_size(rng, 1, 9);
    const double lambda = rng.uniform(0.5, 100.0);
    const Tensor s = random_tensor(rng, {b, b});
    const double got = infonce(s, lambda).item();
    EXPECT_NEAR(got, infonce_ref(s, lambda), 1e-10 * std::max(1.0, got));
    EXPECT_GE(got, 0.0);
    const double c = rng.uniform(-3, 3);
    EXPECT_NEAR(infonce(add(s, Tensor::scalar(c)), lambda).item(), got, 1e-9 * std::max(1.0, got));
  }
}

TEST(Sdr, Examples) {
  EXPECT_DOUBLE_EQ(sdr(Tensor::from({1, 4}, {0, 0, 1, 1})).item(), 0.25);
  EXPECT_DOUBLE_EQ(sdr(Tensor::from({2, 4}, {0, 0, 1, 1, 2, 2, 2, 2})).item(), 0.125);
  EXPECT_EQ(sdr(Tensor::zeros({0, 4})).item(), 0.0);
  EXPECT_THROW(sdr(Tensor::zeros({4})), DimensionError);
}

TEST(Sdr, NonNegativeAndZeroOnConstantRows) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = testing::random_size(rng, 1, 10);
    EXPECT_GE(sdr(random_tensor(rng, {n, 4})).item(), 0.0);
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) v.insert(v.end(), 4, rng.uniform(-1, 1));
    EXPECT_NEAR(sdr(Tensor::from({n, 4}, v)).item(), 0.0, 1e-15);
  }
}

TEST(SelectQuads, Modes) {
  std::vector<double> v;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t q = 0; q < 4; ++q) v.push_back(static_cast<double>(i * 10 + j) + 0.1 * q);
  const Tensor grid = Tensor::from({3, 3, 4}, v);
  const Tensor pos = select_quads(grid, SdrData::kPositives);
  ASSERT_EQ(pos.shape(), (Shape{3, 4}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(pos.at({i, 2}), static_cast<double>(i * 11) + 0.2);
  const Tensor neg = select_quads(grid, SdrData::kNegatives);
  ASSERT_EQ(neg.shape(), (Shape{6, 4}));
  for (std::size_t r = 0; r < 6; ++r) {
    const auto code = static_cast<std::size_t>(neg.at({r, 0}));
    EXPECT_NE(code / 10, code % 10);
  }
  EXPECT_EQ(select_quads(grid, SdrData::kAll).shape(), (Shape{9, 4}));
  EXPECT_EQ(select_quads(Tensor::zeros({1, 1, 4}), SdrData::kNegatives).shape(), (Shape{0, 4}));
  for (auto d : {SdrData::kPositives, SdrData::kNegatives, SdrData::kAll}) EXPECT_EQ(parse_sdr_data(to_string(d)), d);
  EXPECT_THROW(parse_sdr_data("diagonal"), ConfigError);
}

TEST(TotalLoss, CombinesTerms) {
  Rng rng(3);
  const Tensor s = random_tensor(rng, {4, 4});
  const Tensor quads = random_tensor(rng, {4, 4, 4});
  LossConfig config;
  config.alpha = 0.0;
  const LossTerms plain = total_loss(s, quads, config);
  EXPECT_EQ(plain.total.item(), infonce(s, config.lambda).item());
  config.alpha = 0.5;
  const LossTerms reg = total_loss(s, quads, config);
  EXPECT_NEAR(reg.total.item(), reg.infonce.item() + 0.5 * sdr(select_quads(quads, SdrData::kPositives)).item(),
              1e-12);
  config.alpha = -1;
  EXPECT_THROW(total_loss(s, quads, config), ConfigError);
}

TEST(TotalLoss, GradientFlowsToScoresAndQuads) {
  Rng rng(4);
  const Tensor s = random_tensor(rng, {3, 3}, -1, 1, true);
  const Tensor quads = random_tensor(rng, {3, 3, 4}, -1, 1, true);
  backward(total_loss(s, quads, LossConfig{}).total);
  ASSERT_TRUE(s.has_grad());
  ASSERT_TRUE(quads.has_grad());
  // Off-diagonal quads do not enter the positive-only regularizer.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t q = 0; q < 4; ++q) {
        const double g = quads.grad()[(i * 3 + j) * 4 + q];
        if (i != j) EXPECT_EQ(g, 0.0);
      }
}

}  // namespace
}  // namespace tcmgc
