#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "inceptive/error.hpp"
#include "inceptive/metrics.hpp"
#include "inceptive/rng.hpp"

using namespace inceptive;

namespace {

// Pairwise Mann-Whitney count: every (positive, negative) pair scores 2 for a
// win and 1 for a tie, so the halving happens once at the end.
double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& t) {
  std::int64_t count2 = 0;
  std::int64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (t[i]) ++pos; else ++neg;
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!t[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (t[j]) continue;
      count2 += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
    }
  }
  return static_cast<double>(count2) / 2.0 / (static_cast<double>(pos) * static_cast<double>(neg));
}

// Every cutoff k recounts its true positives from scratch.
double cutoff_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& t) {
  std::vector<std::size_t> rank(s.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::sort(rank.begin(), rank.end(), [&](std::size_t x, std::size_t y) {
    if (s[x] != s[y]) return s[x] > s[y];
    return x < y;
  });
  double positives = 0.0;
  for (auto v : t) positives += v ? 1.0 : 0.0;
  double ap = 0.0;
  double prev = 0.0;
  for (std::size_t k = 1; k <= s.size(); ++k) {
    double tp = 0.0;
    for (std::size_t i = 0; i < k; ++i) tp += t[rank[i]] ? 1.0 : 0.0;
    const double r = tp / positives;
    ap += (r - prev) * (tp / static_cast<double>(k));
    prev = r;
  }
  return ap;
}

// Recursive enumeration of sign assignments over doubled ranks computed by
// counting smaller and equal magnitudes.
double enumerated_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i] != a[i]) d.push_back(b[i] - a[i]);
  }
  const std::size_t n = d.size();
  std::vector<std::int64_t> r2(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) ++less;
      else if (std::abs(d[j]) == std::abs(d[i])) ++equal;
    }
    r2[i] = 2 * less + equal + 1;
  }
  std::int64_t total = 0, plus = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += r2[i];
    if (d[i] > 0) plus += r2[i];
  }
  const std::int64_t obs = std::min(plus, total - plus);
  std::uint64_t extreme = 0;
  std::function<void(std::size_t, std::int64_t)> walk = [&](std::size_t i, std::int64_t w) {
    if (i == n) {
      extreme += std::min(w, total - w) <= obs;
      return;
    }
    walk(i + 1, w);
    walk(i + 1, w + r2[i]);
  };
  walk(0, 0);
  return static_cast<double>(extreme) / std::ldexp(1.0, static_cast<int>(n));
}

PredictionSet multi(const std::vector<std::vector<double>>& s, const std::vector<std::uint8_t>& truth,
                    double threshold = 0.5) {
  Tensor scores({s.size(), s.front().size()});
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s[i].size(); ++j) scores.at({i, j}) = s[i][j];
  }
  return PredictionSet::multi_label_set(std::move(scores), truth, threshold);
}

PredictionSet single(const std::vector<std::vector<double>>& s, const std::vector<std::uint32_t>& truth) {
  Tensor scores({s.size(), s.front().size()});
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s[i].size(); ++j) scores.at({i, j}) = s[i][j];
  }
  return PredictionSet::single_label(std::move(scores), truth);
}

}  // namespace

TEST(Accuracy, AllCorrectIsOne) {
  auto set = single({{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}}, {0, 1, 0});
  EXPECT_EQ(accuracy(set), 1.0);
}

TEST(Accuracy, BinaryHalf) {
  auto set = single({{0.1, 0.9}, {0.3, 0.7}}, {1, 0});
  EXPECT_EQ(accuracy(set), 0.5);
}

TEST(Accuracy, MultiLabelCountsCells) {
  auto set = multi({{0.9, 0.1, 0.8}, {0.2, 0.7, 0.1}}, {1, 0, 1, 0, 1, 1});
  EXPECT_DOUBLE_EQ(accuracy(set), 5.0 / 6.0);
}

TEST(Accuracy, ArgmaxTieGoesToLowestClass) {
  auto set = single({{0.5, 0.5, 0.0}}, {0});
  EXPECT_EQ(set.predicted, (std::vector<std::uint8_t>{1, 0, 0}));
}

TEST(Accuracy, SizeMismatchIsInputError) {
  Tensor s({2, 2}, 0.5);
  std::vector<std::uint32_t> one{0};
  EXPECT_THROW(PredictionSet::single_label(s, one), InputError);
  std::vector<std::uint8_t> three{0, 1, 0};
  EXPECT_THROW(PredictionSet::multi_label_set(s, three, 0.5), InputError);
  EXPECT_THROW(accuracy(PredictionSet{}), InputError);
}

TEST(PrecisionRecall, HandCountsOneEach) {
  // Cells: (p=1,t=1) TP, (p=1,t=0) FP, (p=0,t=1) FN, (p=0,t=0) TN.
  auto set = multi({{0.9, 0.9, 0.1, 0.1}}, {1, 0, 1, 0});
  const auto m = precision_recall_f1(set, Averaging::micro);
  EXPECT_EQ(m.precision, 0.5);
  EXPECT_EQ(m.recall, 0.5);
  EXPECT_EQ(m.f1, 0.5);
}

TEST(PrecisionRecall, PerfectBothAveragings) {
  auto set = multi({{0.9, 0.1}, {0.8, 0.7}}, {1, 0, 1, 1});
  for (auto avg : {Averaging::micro, Averaging::macro}) {
    const auto m = precision_recall_f1(set, avg);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.f1, 1.0);
  }
}

TEST(PrecisionRecall, AbsentClassContributesZeroToMacro) {
  // Class 2 is never predicted and never true.
  auto set = single({{0.9, 0.1, 0.0}, {0.1, 0.9, 0.0}}, {0, 1});
  const auto m = precision_recall_f1(set, Averaging::macro);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);
}

TEST(PrecisionRecall, MacroHandValue) {
  // Class 0: TP=1 FP=1 -> P=0.5 R=1. Class 1: TP=1 FN=1 -> P=1 R=0.5.
  auto set = single({{0.9, 0.1}, {0.8, 0.2}, {0.1, 0.9}}, {0, 1, 1});
  const auto m = precision_recall_f1(set, Averaging::macro);
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.75);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);
}

TEST(PrecisionRecall, MicroEqualsAccuracyForSingleLabel) {
  Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng.below(40);
    const std::size_t c = 2 + rng.below(5);
    Tensor scores({b, c});
    std::vector<std::uint32_t> truth(b);
    for (double& v : scores.data()) v = rng.uniform();
    for (auto& t : truth) t = static_cast<std::uint32_t>(rng.below(c));
    auto set = PredictionSet::single_label(scores, truth);
    const auto m = precision_recall_f1(set, Averaging::micro);
    EXPECT_DOUBLE_EQ(m.precision, accuracy(set));
    EXPECT_DOUBLE_EQ(m.recall, accuracy(set));
    EXPECT_DOUBLE_EQ(m.f1, accuracy(set));
  }
}

TEST(RocAuc, HandCases) {
  EXPECT_EQ(roc_auc(std::vector<double>{0.9, 0.1}, std::vector<std::uint8_t>{1, 0}), 1.0);
  EXPECT_EQ(roc_auc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<std::uint8_t>{1, 0, 1}), 0.5);
  EXPECT_EQ(roc_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<std::uint8_t>{1, 0, 0, 1}), 0.5);
}

TEST(RocAuc, SingleClassIsUndefined) {
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}), UndefinedMetricError);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{0, 0}), UndefinedMetricError);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1}, std::vector<std::uint8_t>{0, 1}), InputError);
}

TEST(RocAuc, MatchesPairwiseOracleExactly) {
  Rng rng(2024);
  int checked = 0;
  while (checked < 200) {
    const std::size_t b = 2 + rng.below(49);
    std::vector<double> s(b);
    std::vector<std::uint8_t> t(b);
    // A coarse grid half the time forces plenty of ties.
    const bool grid = rng.below(2) == 0;
    for (std::size_t i = 0; i < b; ++i) {
      s[i] = grid ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
      t[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    const bool pos = std::count(t.begin(), t.end(), 1) > 0;
    const bool neg = std::count(t.begin(), t.end(), 0) > 0;
    if (!pos || !neg) continue;
    EXPECT_EQ(roc_auc(s, t), pairwise_auc(s, t)) << "case " << checked;
    ++checked;
  }
}

TEST(RocAuc, MacroAveragesColumns) {
  auto set = single({{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}, {0.7, 0.3}}, {0, 1, 1, 0});
  const std::vector<double> c0{0.9, 0.2, 0.6, 0.7}, c1{0.1, 0.8, 0.4, 0.3};
  const std::vector<std::uint8_t> t0{1, 0, 0, 1}, t1{0, 1, 1, 0};
  EXPECT_DOUBLE_EQ(macro_roc_auc(set), 0.5 * (pairwise_auc(c0, t0) + pairwise_auc(c1, t1)));
}

TEST(AveragePrecision, HandCases) {
  EXPECT_EQ(average_precision(std::vector<double>{0.9, 0.1}, std::vector<std::uint8_t>{1, 0}), 1.0);
  EXPECT_EQ(average_precision(std::vector<double>{0.9, 0.1}, std::vector<std::uint8_t>{0, 1}), 0.5);
  EXPECT_EQ(average_precision(std::vector<double>{0.2, 0.7, 0.4}, std::vector<std::uint8_t>{1, 1, 1}), 1.0);
}

TEST(AveragePrecision, TiesBreakByIndex) {
  // Equal scores: index 0 (negative) ranks ahead of index 1 (positive).
  EXPECT_EQ(average_precision(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{0, 1}), 0.5);
  EXPECT_EQ(average_precision(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{1, 0}), 1.0);
}

TEST(AveragePrecision, NoPositivesIsUndefined) {
  EXPECT_THROW(average_precision(std::vector<double>{0.5, 0.1}, std::vector<std::uint8_t>{0, 0}),
               UndefinedMetricError);
}

TEST(AveragePrecision, MatchesCutoffOracle) {
  Rng rng(77);
  int checked = 0;
  while (checked < 200) {
    const std::size_t b = 1 + rng.below(50);
    std::vector<double> s(b);
    std::vector<std::uint8_t> t(b);
    const bool grid = rng.below(2) == 0;
    for (std::size_t i = 0; i < b; ++i) {
      s[i] = grid ? static_cast<double>(rng.below(4)) / 3.0 : rng.uniform();
      t[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    if (std::count(t.begin(), t.end(), 1) == 0) continue;
    EXPECT_EQ(average_precision(s, t), cutoff_ap(s, t)) << "case " << checked;
    ++checked;
  }
}

TEST(AveragePrecision, MacroAveragesLabels) {
  auto set = multi({{0.9, 0.2}, {0.1, 0.8}, {0.4, 0.6}}, {1, 0, 0, 1, 1, 0});
  const double a0 = cutoff_ap({0.9, 0.1, 0.4}, {1, 0, 1});
  const double a1 = cutoff_ap({0.2, 0.8, 0.6}, {0, 1, 0});
  EXPECT_DOUBLE_EQ(macro_average_precision(set), 0.5 * (a0 + a1));
}

TEST(Wilcoxon, TenPositiveDifferences) {
  std::vector<double> a(10), b(10);
  for (int i = 0; i < 10; ++i) {
    a[i] = 0.5 + 0.01 * i;
    b[i] = a[i] + 0.001 * (i + 1);
  }
  const auto r = wilcoxon_signed_rank(a, b);
  EXPECT_EQ(r.n, 10u);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.w_plus, 55.0);
  EXPECT_EQ(r.p_value, 2.0 / 1024.0);
  EXPECT_NEAR(r.p_value, 0.00195, 5e-6);
}

TEST(Wilcoxon, ThreePositive) {
  const auto r = wilcoxon_signed_rank(std::vector<double>{0, 0, 0}, std::vector<double>{1, 2, 3});
  EXPECT_EQ(r.p_value, 0.25);
}

TEST(Wilcoxon, ZeroDifferencesDropped) {
  const auto r = wilcoxon_signed_rank(std::vector<double>{0, 0, 0, 5}, std::vector<double>{1, 2, 3, 5});
  EXPECT_EQ(r.n, 3u);
  EXPECT_EQ(r.p_value, 0.25);
}

TEST(Wilcoxon, Errors) {
  const std::vector<double> x{1, 2, 3};
  EXPECT_THROW(wilcoxon_signed_rank(x, x), DegenerateSampleError);
  EXPECT_THROW(wilcoxon_signed_rank(x, std::vector<double>{1, 2}), InputError);
  std::vector<double> a(26, 0.0), b(26);
  std::iota(b.begin(), b.end(), 1.0);
  EXPECT_THROW(wilcoxon_signed_rank(a, b), InputError);
}

TEST(Wilcoxon, LimitSizeRuns) {
  std::vector<double> a(25, 0.0), b(25);
  std::iota(b.begin(), b.end(), 1.0);
  EXPECT_EQ(wilcoxon_signed_rank(a, b).p_value, 2.0 / std::ldexp(1.0, 25));
}

TEST(Wilcoxon, MatchesRecursiveEnumeration) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(rng.below(6));
      // Small integer offsets produce tied magnitudes and some zeros.
      b[i] = a[i] + static_cast<double>(static_cast<int>(rng.below(7)) - 3);
    }
    if (a == b) continue;
    const auto r = wilcoxon_signed_rank(a, b);
    EXPECT_EQ(r.p_value, enumerated_p(a, b)) << "trial " << trial;
    EXPECT_GT(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
    EXPECT_EQ(r.statistic, std::min(r.w_plus, r.w_minus));
    EXPECT_EQ(wilcoxon_signed_rank(b, a).p_value, r.p_value);
  }
}

TEST(Wilcoxon, TiedRanksAreAveraged) {
  // |d| = {1, 1, 2}: ranks 1.5, 1.5, 3. W+ = 1.5 + 3, W- = 1.5.
  const auto r = wilcoxon_signed_rank(std::vector<double>{0, 0, 0}, std::vector<double>{1, -1, 2});
  EXPECT_EQ(r.w_plus, 4.5);
  EXPECT_EQ(r.w_minus, 1.5);
  EXPECT_EQ(r.statistic, 1.5);
}
