#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "inceptive/tensor.hpp"

namespace inceptive {

enum class Averaging { micro, macro };

/// Scores, hard predictions and truths for B examples over C classes/labels.
/// Predictions and truths are stored as B x C row-major 0/1 indicators; for
/// single-label tasks each row is one-hot and the prediction is the argmax.
struct PredictionSet {
  Tensor scores;
  std::vector<std::uint8_t> predicted;
  std::vector<std::uint8_t> truth;
  bool multi_label = false;

  std::size_t examples() const noexcept { return scores.rank() == 2 ? scores.dim(0) : 0; }
  std::size_t classes() const noexcept { return scores.rank() == 2 ? scores.dim(1) : 0; }

  // Argmax predictions (ties resolve to the lowest class index).
  static PredictionSet single_label(Tensor scores, std::span<const std::uint32_t> truths);
  // Thresholded predictions: score > threshold.
  static PredictionSet multi_label_set(Tensor scores, std::span<const std::uint8_t> truths, double threshold);
};

/// Exact-match fraction (single-label) or per-cell match fraction (multi-label).
double accuracy(const PredictionSet& set);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Micro pools TP/FP/FN over every cell; macro averages per-class scores
/// unweighted. Any ratio with a zero denominator is 0, and F1 is 0 when
/// P + R = 0.
PrecisionRecallF1 precision_recall_f1(const PredictionSet& set, Averaging averaging);

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Throws UndefinedMetricError unless both classes occur.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> truths);

/// One-vs-rest ROC AUC averaged over classes.
double macro_roc_auc(const PredictionSet& set);

/// AP = sum_k (R_k - R_{k-1}) P_k over items ranked by (score desc, index asc).
/// Throws UndefinedMetricError when there are no positives.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> truths);

/// Average precision averaged over labels.
double macro_average_precision(const PredictionSet& set);

struct WilcoxonResult {
  double statistic = 0.0;  // W = min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p_value = 1.0;    // exact, two-sided
  std::size_t n = 0;       // pairs left after dropping zero differences
};

inline constexpr std::size_t kWilcoxonExactLimit = 25;

/// Exact Wilcoxon signed-rank test on paired samples (differences b - a).
/// Zero differences are dropped, tied magnitudes get average ranks and the
/// two-sided p-value enumerates all 2^n sign assignments.
/// Throws DegenerateSampleError if every difference is zero and InputError on
/// length mismatch or more than kWilcoxonExactLimit non-zero pairs.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

}  // namespace inceptive
