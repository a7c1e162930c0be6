#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inceptive/metrics.hpp"
#include "inceptive/model.hpp"
#include "inceptive/param_store.hpp"
#include "inceptive/tensor.hpp"

namespace inceptive {

// ---------------------------------------------------------------------------
// Losses. Both return the batch-mean loss and its gradient w.r.t. the logits.

struct LossResult {
  double loss = 0.0;
  Tensor dlogits;
};

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const std::uint32_t> targets);

/// Mean over all B*C cells of max(z,0) - z*y + log(1 + exp(-|z|)).
LossResult bce_with_logits(const Tensor& logits, const Tensor& targets);

/// Loss matching the task for the labels of `indices`.
LossResult task_loss(const Dataset& data, std::span<const std::size_t> indices, const Tensor& logits);

// ---------------------------------------------------------------------------

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// AdamW with decoupled weight decay, applied only to parameters flagged
/// `decay`:
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // Throws NumericError on non-finite gradients (parameters are untouched).
  void step(ParamStore& params, double lr, double weight_decay);

  std::size_t steps() const noexcept { return t_; }
  const AdamWConfig& config() const noexcept { return config_; }

 private:
  AdamWConfig config_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

/// lr_min + (lr_max - lr_min) * (1 + cos(pi * t / T)) / 2
double cosine_lr(std::size_t t, std::size_t total, double lr_max, double lr_min);

// ---------------------------------------------------------------------------

enum class SelectionMetric { accuracy, f1 };

struct TrainConfig {
  std::size_t seq_len = 128;
  std::size_t batch_size = 32;
  std::size_t epochs = 12;
  double lr = 1e-5;
  double lr_min = 0.0;
  double weight_decay = 1e-3;
  double sigmoid_threshold = 0.5;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 0;
  // Unset: accuracy for multi-class/binary, micro F1 for multi-label.
  std::optional<SelectionMetric> selection_metric;

  void validate() const;
  SelectionMetric selection_for(Task task) const;
};

struct EvalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  PrecisionRecallF1 micro;
  PrecisionRecallF1 macro;
  std::optional<double> auc_roc;  // multi-class / binary
  std::optional<double> aupr;     // multi-label
  double inference_seconds = 0.0;
};

double metric_value(const EvalMetrics& metrics, SelectionMetric metric);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double learning_rate = 0.0;
  double max_grad_norm = 0.0;  // largest pre-clip global norm seen in the epoch
  EvalMetrics validation;
  double wall_seconds = 0.0;
};

struct RunReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based
  double best_metric = 0.0;
  SelectionMetric selection = SelectionMetric::accuracy;
  std::optional<EvalMetrics> test;
  double total_seconds = 0.0;
};

struct EpochStats {
  double mean_loss = 0.0;
  double max_grad_norm = 0.0;
};

/// One pass over `train` in a shuffled order derived from (seed, epoch):
/// forward, loss, backward, clip_global_norm, AdamW step. The last partial
/// batch is kept.
EpochStats train_epoch(Classifier& model, const Dataset& data, std::span<const std::size_t> train,
                       const TrainConfig& config, AdamW& optimizer, std::size_t epoch, double lr);

/// Eval-mode metrics over `indices`. Throws InputError when empty.
/// ROC AUC / AUPR average over the classes where they are defined and are
/// absent when no class qualifies.
EvalMetrics evaluate(Classifier& model, const Dataset& data, std::span<const std::size_t> indices,
                     const TrainConfig& config);

/// Scores and indicators for `indices`, as fed to the metric functions.
PredictionSet predict(Classifier& model, const Dataset& data, std::span<const std::size_t> indices,
                      const TrainConfig& config, double* inference_seconds = nullptr);

/// 1-based epoch maximizing the selection metric; ties go to the earliest.
std::size_t select_best(std::span<const EpochRecord> epochs, SelectionMetric metric);
std::size_t select_best(const RunReport& report, Task task);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle cut into k contiguous folds whose sizes differ by at most one
/// (the first n % k folds are one larger). Throws InputError when n < k.
std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Seeded shuffle partitioned into train / validation / test.
Split train_val_test_split(std::size_t n, double val_fraction, double test_fraction, std::uint64_t seed);

struct TrainingOutcome {
  RunReport report;
  ParamStore best_params;
  BufferStore best_buffers;
};

/// Trains for config.epochs epochs on split.train with a cosine schedule,
/// validating after every epoch; keeps the parameters of the best epoch and
/// evaluates them on split.test (when non-empty).
TrainingOutcome train_model(Classifier& model, const Dataset& data, const Split& split, const TrainConfig& config);

}  // namespace inceptive
