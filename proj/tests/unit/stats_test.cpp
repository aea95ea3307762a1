// Copyright 2026 The contam Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "contam/stats.hpp"

namespace contam {
namespace {

using V = std::vector<double>;

TEST(Spearman, PerfectAndReversed) {
  EXPECT_DOUBLE_EQ(spearman(V{1, 2, 3}, V{10, 20, 30}), 1.0);
  EXPECT_DOUBLE_EQ(spearman(V{1, 2, 3}, V{30, 20, 10}), -1.0);
}

TEST(Spearman, TieFixture) {
  // Reference: scipy.stats.spearmanr([1,2,3,4], [1,1,2,3]).
  EXPECT_NEAR(spearman(V{1, 2, 3, 4}, V{1, 1, 2, 3}), 0.9486832980505139, 1e-15);
}

TEST(Spearman, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  V x(30), y(30);
  for (std::size_t i = 0; i < 30; ++i) {
    x[i] = nd(gen);
    y[i] = x[i] + nd(gen);
  }
  V ty(y);
  for (double& v : ty) v = std::exp(3.0 * v) - 7.0;
  EXPECT_NEAR(spearman(x, y), spearman(x, ty), 1e-14);
  EXPECT_NEAR(spearman(x, y), spearman(y, x), 1e-14);
}

TEST(Ranks, AverageOverTies) {
  EXPECT_EQ(average_ranks(V{10, 20, 10, 30}), (V{1.5, 3, 1.5, 4}));
}

TEST(Pearson, AffineAndHandCase) {
  EXPECT_DOUBLE_EQ(pearson(V{1, 2, 3, 4}, V{3, 5, 7, 9}), 1.0);
  EXPECT_DOUBLE_EQ(pearson(V{1, 2, 3}, V{-1, -2, -3}), -1.0);
  // Means 1 and 5/3; sxy = 4, sxx = 2, syy = 26/3.
  const double hand = 4.0 / std::sqrt(2.0 * 26.0 / 3.0);
  EXPECT_NEAR(pearson(V{0, 1, 2}, V{0, 1, 4}), hand, 1e-15);
  EXPECT_NEAR(hand, 0.9607689228305227, 1e-15);
}

TEST(Correlation, Errors) {
  EXPECT_THROW(pearson(V{1, 1, 1}, V{1, 2, 3}), DegenerateError);
  EXPECT_THROW(spearman(V{1, 2, 3}, V{5, 5, 5}), DegenerateError);
  EXPECT_THROW(pearson(V{1, 2}, V{1, 2, 3}), DataError);
  EXPECT_THROW(pearson(V{1}, V{1}), DataError);
  EXPECT_THROW(pearson(V{1, NAN}, V{1, 2}), DataError);
}

TEST(Mape, Cases) {
  EXPECT_EQ(mape_consistency(V{2, 2, 2, 2, 2}), 0.0);
  EXPECT_NEAR(mape_consistency(V{1, 1, 1, 1, 2}), 4.0 / 15.0, 1e-15);
  EXPECT_THROW(mape_consistency(V{1, -1, 1, -1, 0}), DegenerateError);
  EXPECT_THROW(mape_consistency(V{3}), DataError);
}

TEST(Mape, ScaleInvariant) {
  const V s{-0.41, -0.38, -0.45, -0.40, -0.39};
  V scaled(s);
  for (double& v : scaled) v *= -250.0;
  EXPECT_NEAR(mape_consistency(s), mape_consistency(scaled), 1e-14);
}

}  // namespace
}  // namespace contam
