#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "shmbayes/eval/metrics.hpp"

using namespace shmbayes::eval;

TEST(MacroF1, PerfectAndAllWrong) {
  EXPECT_DOUBLE_EQ(macro_f1({1, 2, 3, 1}, {1, 2, 3, 1}, 3), 1.0);
  EXPECT_DOUBLE_EQ(macro_f1({1, 1, 2, 2}, {2, 2, 1, 1}, 2), 0.0);
}

TEST(MacroF1, HandCountedExample) {
  const ConfusionMatrix cm({1, 1, 2, 2}, {1, 2, 2, 2}, 2);
  EXPECT_DOUBLE_EQ(cm.f1(1), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(cm.f1(2), 4.0 / 5.0);
  EXPECT_NEAR(cm.macro_f1(), (2.0 / 3.0 + 0.8) / 2.0, 1e-15);
  EXPECT_EQ(cm.total(), 4u);
}

TEST(MacroF1, AbsentClassScoresZero) {
  // class 3 never appears in truth or prediction
  const ConfusionMatrix cm({1, 2}, {1, 2}, 3);
  EXPECT_DOUBLE_EQ(cm.f1(3), 0.0);
  EXPECT_DOUBLE_EQ(cm.macro_f1(), 2.0 / 3.0);
}

TEST(MacroF1, Errors) {
  EXPECT_THROW(macro_f1({1, 2}, {1}, 2), std::invalid_argument);
  EXPECT_THROW(macro_f1({1, 3}, {1, 1}, 2), std::invalid_argument);
}

TEST(MacroF1, RelabelInvariantBoundedAndDiagonalIffOne) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> lab(1, 4);
  std::bernoulli_distribution flip(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> t(30), p(30);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = lab(rng);
      p[i] = flip(rng) ? lab(rng) : t[i];
    }
    std::vector<int> perm{1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> tp, pp;
    for (std::size_t i = 0; i < t.size(); ++i) {
      tp.push_back(perm[static_cast<std::size_t>(t[i] - 1)]);
      pp.push_back(perm[static_cast<std::size_t>(p[i] - 1)]);
    }
    const ConfusionMatrix cm(t, p, 4);
    EXPECT_NEAR(cm.macro_f1(), macro_f1(tp, pp, 4), 1e-12);
    EXPECT_GE(cm.macro_f1(), 0.0);
    EXPECT_LE(cm.macro_f1(), 1.0);
    const bool all_present = std::set<int>(t.begin(), t.end()).size() == 4;
    if (all_present) EXPECT_EQ(cm.diagonal(), cm.macro_f1() == 1.0);
  }
}

TEST(ClusterMapping, IdentityAndTieRule) {
  const auto m = map_clusters({1, 2, 3, 3}, {1, 2, 3, 3});
  EXPECT_DOUBLE_EQ(m.purity, 1.0);
  const auto tie = map_clusters({7, 7, 7, 7}, {2, 1, 2, 1});
  EXPECT_EQ(tie.cluster_to_class.at(7), 1);
  EXPECT_DOUBLE_EQ(tie.purity, 0.5);
  EXPECT_THROW(map_clusters({1}, {1, 2}), std::invalid_argument);
}

TEST(ClusterMapping, SplittingNeverLowersPurity) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> cls(1, 3), clu(1, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> a(60), y(60);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = clu(rng);
      y[i] = cls(rng);
    }
    // split cluster 1 by true class: the pieces are pure
    auto split = a;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] == 1) split[i] = 100 + y[i];
    EXPECT_GE(map_clusters(split, y).purity, map_clusters(a, y).purity);
  }
}

TEST(MetricsReport, Json) {
  const ConfusionMatrix cm({1, 1, 2, 2}, {1, 2, 2, 2}, 2);
  const auto mapping = map_clusters({1, 1, 2, 2}, {1, 1, 2, 2});
  const auto j = metrics_report(cm, &mapping);
  EXPECT_EQ(j["confusion"][0][1], 1);
  EXPECT_DOUBLE_EQ(j["per_class"][1]["f1"].get<double>(), 0.8);
  EXPECT_DOUBLE_EQ(j["purity"].get<double>(), 1.0);
}
