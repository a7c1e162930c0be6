#include "inceptive/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "inceptive/error.hpp"

namespace inceptive {

PredictionSet PredictionSet::single_label(Tensor scores, std::span<const std::uint32_t> truths) {
  if (scores.rank() != 2) throw InputError("prediction scores must be B x C, got " + shape_str(scores.shape()));
  const std::size_t n = scores.dim(0);
  const std::size_t c = scores.dim(1);
  if (truths.size() != n) throw InputError("prediction set: " + std::to_string(truths.size()) + " truths for " +
                                           std::to_string(n) + " score rows");
  PredictionSet set;
  set.predicted.assign(n * c, 0);
  set.truth.assign(n * c, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (truths[i] >= c) throw LabelError("class index " + std::to_string(truths[i]) + " out of range");
    const double* row = scores.raw() + i * c;
    const std::size_t best = static_cast<std::size_t>(std::max_element(row, row + c) - row);
    set.predicted[i * c + best] = 1;
    set.truth[i * c + truths[i]] = 1;
  }
  set.scores = std::move(scores);
  return set;
}

PredictionSet PredictionSet::multi_label_set(Tensor scores, std::span<const std::uint8_t> truths, double threshold) {
  if (scores.rank() != 2) throw InputError("prediction scores must be B x C, got " + shape_str(scores.shape()));
  if (truths.size() != scores.size()) throw InputError("prediction set: truth matrix size differs from scores");
  PredictionSet set;
  set.multi_label = true;
  set.truth.assign(truths.begin(), truths.end());
  set.predicted.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (truths[i] > 1) throw LabelError("multi-label truths must be 0 or 1");
    set.predicted[i] = scores[i] > threshold ? 1 : 0;
  }
  set.scores = std::move(scores);
  return set;
}

namespace {

void require_nonempty(const PredictionSet& set) {
  if (set.examples() == 0 || set.predicted.size() != set.scores.size() || set.truth.size() != set.scores.size()) {
    throw InputError("prediction set is empty or inconsistent");
  }
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

double accuracy(const PredictionSet& set) {
  require_nonempty(set);
  const std::size_t n = set.examples();
  const std::size_t c = set.classes();
  if (set.multi_label) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < set.truth.size(); ++i) hits += set.truth[i] == set.predicted[i];
    return static_cast<double>(hits) / static_cast<double>(set.truth.size());
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    hits += std::equal(set.truth.begin() + i * c, set.truth.begin() + (i + 1) * c, set.predicted.begin() + i * c);
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

PrecisionRecallF1 precision_recall_f1(const PredictionSet& set, Averaging averaging) {
  require_nonempty(set);
  const std::size_t n = set.examples();
  const std::size_t c = set.classes();
  std::vector<double> tp(c, 0.0), fp(c, 0.0), fn(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const bool p = set.predicted[i * c + j];
      const bool t = set.truth[i * c + j];
      tp[j] += p && t;
      fp[j] += p && !t;
      fn[j] += !p && t;
    }
  }
  PrecisionRecallF1 out;
  if (averaging == Averaging::micro) {
    const double TP = std::accumulate(tp.begin(), tp.end(), 0.0);
    const double FP = std::accumulate(fp.begin(), fp.end(), 0.0);
    const double FN = std::accumulate(fn.begin(), fn.end(), 0.0);
    out.precision = ratio(TP, TP + FP);
    out.recall = ratio(TP, TP + FN);
    out.f1 = f1_of(out.precision, out.recall);
    return out;
  }
  for (std::size_t j = 0; j < c; ++j) {
    const double p = ratio(tp[j], tp[j] + fp[j]);
    const double r = ratio(tp[j], tp[j] + fn[j]);
    out.precision += p;
    out.recall += r;
    out.f1 += f1_of(p, r);
  }
  out.precision /= static_cast<double>(c);
  out.recall /= static_cast<double>(c);
  out.f1 /= static_cast<double>(c);
  return out;
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> truths) {
  if (scores.size() != truths.size()) throw InputError("roc_auc: scores and truths differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return scores[x] < scores[y]; });
  // Mann-Whitney via average ranks (1-based) over ascending scores.
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (truths[order[t]]) {
        rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetricError("roc_auc: needs both positive and negative examples");
  const double np = static_cast<double>(positives);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(negatives));
}

namespace {

std::vector<double> column(const Tensor& scores, std::size_t j) {
  std::vector<double> col(scores.dim(0));
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = scores[i * scores.dim(1) + j];
  return col;
}

std::vector<std::uint8_t> column(const std::vector<std::uint8_t>& bits, std::size_t rows, std::size_t cols,
                                 std::size_t j) {
  std::vector<std::uint8_t> col(rows);
  for (std::size_t i = 0; i < rows; ++i) col[i] = bits[i * cols + j];
  return col;
}

}  // namespace

double macro_roc_auc(const PredictionSet& set) {
  require_nonempty(set);
  double total = 0.0;
  for (std::size_t j = 0; j < set.classes(); ++j) {
    total += roc_auc(column(set.scores, j), column(set.truth, set.examples(), set.classes(), j));
  }
  return total / static_cast<double>(set.classes());
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> truths) {
  if (scores.size() != truths.size()) throw InputError("average_precision: scores and truths differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });
  const auto positives = static_cast<double>(std::count_if(truths.begin(), truths.end(), [](auto t) { return t != 0; }));
  if (positives == 0.0) throw UndefinedMetricError("average_precision: no positive examples");
  double ap = 0.0;
  double prev_recall = 0.0;
  double tp = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += truths[order[k]] ? 1.0 : 0.0;
    const double recall = tp / positives;
    const double precision = tp / static_cast<double>(k + 1);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double macro_average_precision(const PredictionSet& set) {
  require_nonempty(set);
  double total = 0.0;
  for (std::size_t j = 0; j < set.classes(); ++j) {
    total += average_precision(column(set.scores, j), column(set.truth, set.examples(), set.classes(), j));
  }
  return total / static_cast<double>(set.classes());
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InputError("wilcoxon: samples differ in length (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = b[i] - a[i];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw DegenerateSampleError("wilcoxon: all paired differences are zero");
  const std::size_t n = diffs.size();
  if (n > kWilcoxonExactLimit) {
    throw InputError("wilcoxon: exact test supports at most " + std::to_string(kWilcoxonExactLimit) +
                     " non-zero pairs, got " + std::to_string(n));
  }

  // Twice the average rank is an integer, which keeps the enumeration exact.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return std::abs(diffs[x]) < std::abs(diffs[y]); });
  std::vector<std::int64_t> rank2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::abs(diffs[order[j]]) == std::abs(diffs[order[i]])) ++j;
    for (std::size_t t = i; t < j; ++t) rank2[order[t]] = static_cast<std::int64_t>(i + 1 + j);
    i = j;
  }

  std::int64_t total2 = 0;
  std::int64_t plus2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (diffs[i] > 0.0) plus2 += rank2[i];
  }
  const std::int64_t observed2 = std::min(plus2, total2 - plus2);

  // Walk all sign assignments in Gray-code order, updating W+ by one rank per step.
  const std::uint64_t count = std::uint64_t{1} << n;
  std::uint64_t extreme = 0;
  std::int64_t w2 = 0;
  std::uint64_t gray = 0;
  for (std::uint64_t step = 0; step < count; ++step) {
    if (step > 0) {
      const int bit = std::countr_zero(step);
      gray ^= std::uint64_t{1} << bit;
      w2 += (gray >> bit & 1) ? rank2[bit] : -rank2[bit];
    }
    if (std::min(w2, total2 - w2) <= observed2) ++extreme;
  }

  WilcoxonResult r;
  r.n = n;
  r.w_plus = static_cast<double>(plus2) / 2.0;
  r.w_minus = static_cast<double>(total2 - plus2) / 2.0;
  r.statistic = static_cast<double>(observed2) / 2.0;
  r.p_value = static_cast<double>(extreme) / static_cast<double>(count);
  return r;
}

}  // namespace inceptive
