#include "inceptive/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "inceptive/error.hpp"
#include "inceptive/ops.hpp"

namespace inceptive {

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const std::uint32_t> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " for " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  LossResult r{0.0, softmax_rows(logits)};
  for (std::size_t b = 0; b < batch; ++b) {
    if (targets[b] >= classes) {
      throw LabelError("target " + std::to_string(targets[b]) + " out of range for " + std::to_string(classes) + " classes");
    }
    const double* z = logits.raw() + b * classes;
    const double mx = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) sum += std::exp(z[j] - mx);
    r.loss += mx + std::log(sum) - z[targets[b]];
    r.dlogits[b * classes + targets[b]] -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(batch);
  r.loss *= inv;
  scale_inplace(r.dlogits, inv);
  return r;
}

LossResult bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw DimensionError("bce_with_logits: logits " + shape_str(logits.shape()) + " vs targets " +
                         shape_str(targets.shape()));
  }
  const double inv = 1.0 / static_cast<double>(logits.size());
  LossResult r{0.0, Tensor(logits.shape())};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double y = targets[i];
    if (y != 0.0 && y != 1.0) throw LabelError("bce_with_logits: targets must be 0 or 1");
    r.loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    r.dlogits[i] = (s - y) * inv;
  }
  r.loss *= inv;
  return r;
}

LossResult task_loss(const Dataset& data, std::span<const std::size_t> indices, const Tensor& logits) {
  switch (data.task) {
    case Task::multi_class: {
      std::vector<std::uint32_t> targets;
      targets.reserve(indices.size());
      for (std::size_t i : indices) targets.push_back(std::get<std::uint32_t>(data.labels[i]));
      return softmax_cross_entropy(logits, targets);
    }
    case Task::binary: {
      Tensor targets({indices.size(), 1});
      for (std::size_t b = 0; b < indices.size(); ++b) {
        targets[b] = static_cast<double>(std::get<std::uint32_t>(data.labels[indices[b]]));
      }
      return bce_with_logits(logits, targets);
    }
    case Task::multi_label: {
      Tensor targets({indices.size(), data.n_classes});
      for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto& bits = std::get<std::vector<std::uint8_t>>(data.labels[indices[b]]);
        for (std::size_t j = 0; j < data.n_classes; ++j) targets[b * data.n_classes + j] = bits[j];
      }
      return bce_with_logits(logits, targets);
    }
  }
  throw ConfigError("unknown task");
}

// ---------------------------------------------------------------------------

void AdamW::step(ParamStore& params, double lr, double weight_decay) {
  for (const auto& [name, p] : params) {
    if (!p.grad.all_finite()) throw NumericError("adamw: non-finite gradient in '" + name + "'");
  }
  if (m_.empty()) {
    for (const auto& [name, p] : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }
  if (m_.size() != params.size()) throw ConfigError("adamw: parameter set changed between steps");
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  std::size_t slot = 0;
  for (auto& [name, p] : params) {
    Tensor& m = m_[slot];
    Tensor& v = v_[slot];
    ++slot;
    const double decay = p.decay ? lr * weight_decay : 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = c1 > 0.0 ? m[i] / c1 : m[i];
      const double v_hat = c2 > 0.0 ? v[i] / c2 : v[i];
      const double theta = p.value[i];
      p.value[i] = theta - lr * m_hat / (std::sqrt(v_hat) + config_.eps) - decay * theta;
    }
  }
}

double cosine_lr(std::size_t t, std::size_t total, double lr_max, double lr_min) {
  if (total == 0) throw ConfigError("cosine_lr: total epochs must be positive");
  if (t > total) throw ConfigError("cosine_lr: step beyond schedule");
  if (t == 0) return lr_max;
  if (t == total) return lr_min;
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs: must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size: must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("lr: must be positive");
  if (lr_min < 0.0 || lr_min > lr) throw ConfigError("lr_min: must lie in [0, lr]");
  if (weight_decay < 0.0) throw ConfigError("weight_decay: must be non-negative");
  if (!(sigmoid_threshold > 0.0 && sigmoid_threshold < 1.0)) throw ConfigError("sigmoid_threshold: must lie in (0, 1)");
  if (!(max_grad_norm > 0.0)) throw ConfigError("max_grad_norm: must be positive");
  if (seq_len < 1) throw ConfigError("seq_len: must be positive");
}

SelectionMetric TrainConfig::selection_for(Task task) const {
  if (selection_metric) return *selection_metric;
  return task == Task::multi_label ? SelectionMetric::f1 : SelectionMetric::accuracy;
}

double metric_value(const EvalMetrics& metrics, SelectionMetric metric) {
  return metric == SelectionMetric::accuracy ? metrics.accuracy : metrics.micro.f1;
}

EpochStats train_epoch(Classifier& model, const Dataset& data, std::span<const std::size_t> train,
                       const TrainConfig& config, AdamW& optimizer, std::size_t epoch, double lr) {
  if (train.empty()) throw InputError("train_epoch: no training examples");
  std::vector<std::size_t> order(train.begin(), train.end());
  Rng shuffle_rng(derive_seed(config.seed, 0x5EED0000ULL + epoch));
  shuffle_rng.shuffle(std::span<std::size_t>(order));
  Rng dropout_rng(derive_seed(config.seed, 0xD0000000ULL + epoch));

  EpochStats stats;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    std::span<const std::size_t> batch(order.data() + start, end - start);
    model.params().zero_grad();
    ClassifierOutput out = model.forward(data, batch, Mode::train, dropout_rng);
    LossResult loss = task_loss(data, batch, out.logits);
    if (!std::isfinite(loss.loss)) throw NumericError("non-finite training loss");
    model.backward(loss.dlogits);
    const double norm = clip_global_norm(model.params(), config.max_grad_norm);
    stats.max_grad_norm = std::max(stats.max_grad_norm, norm);
    optimizer.step(model.params(), lr, config.weight_decay);
    loss_sum += loss.loss * static_cast<double>(batch.size());
  }
  stats.mean_loss = loss_sum / static_cast<double>(order.size());
  return stats;
}

PredictionSet predict(Classifier& model, const Dataset& data, std::span<const std::size_t> indices,
                      const TrainConfig& config, double* inference_seconds) {
  if (indices.empty()) throw InputError("evaluate: no examples");
  const Task task = model.config().model.task;
  const std::size_t width = task == Task::binary ? 2 : model.config().model.n_classes;
  Tensor scores({indices.size(), width});
  Rng unused(0);
  double elapsed = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += config.batch_size) {
    const std::size_t end = std::min(indices.size(), start + config.batch_size);
    std::span<const std::size_t> batch(indices.data() + start, end - start);
    const auto t0 = Clock::now();
    ClassifierOutput out = model.forward(data, batch, Mode::eval, unused);
    elapsed += seconds_since(t0);
    Tensor p = probabilities(task, out.logits);
    std::copy(p.data().begin(), p.data().end(), scores.raw() + start * width);
  }
  if (inference_seconds) *inference_seconds = elapsed;

  if (task == Task::multi_label) {
    std::vector<std::uint8_t> truth;
    truth.reserve(indices.size() * width);
    for (std::size_t i : indices) {
      const auto& bits = std::get<std::vector<std::uint8_t>>(data.labels[i]);
      truth.insert(truth.end(), bits.begin(), bits.end());
    }
    return PredictionSet::multi_label_set(std::move(scores), truth, config.sigmoid_threshold);
  }
  std::vector<std::uint32_t> truth;
  truth.reserve(indices.size());
  for (std::size_t i : indices) truth.push_back(std::get<std::uint32_t>(data.labels[i]));
  PredictionSet set = PredictionSet::single_label(std::move(scores), truth);
  if (task == Task::binary) {
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const bool positive = set.scores[2 * i + 1] > config.sigmoid_threshold;
      set.predicted[2 * i] = positive ? 0 : 1;
      set.predicted[2 * i + 1] = positive ? 1 : 0;
    }
  }
  return set;
}

namespace {

// Mean of `metric` over the columns where it is defined.
template <typename Metric>
std::optional<double> defined_column_mean(const PredictionSet& set, Metric metric) {
  const std::size_t n = set.examples();
  const std::size_t c = set.classes();
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> scores(n);
  std::vector<std::uint8_t> truth(n);
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = set.scores[i * c + j];
      truth[i] = set.truth[i * c + j];
    }
    try {
      total += metric(scores, truth);
      ++used;
    } catch (const UndefinedMetricError&) {
    }
  }
  if (used == 0) return std::nullopt;
  return total / static_cast<double>(used);
}

}  // namespace

EvalMetrics evaluate(Classifier& model, const Dataset& data, std::span<const std::size_t> indices,
                     const TrainConfig& config) {
  EvalMetrics m;
  PredictionSet set = predict(model, data, indices, config, &m.inference_seconds);
  m.accuracy = accuracy(set);
  m.micro = precision_recall_f1(set, Averaging::micro);
  m.macro = precision_recall_f1(set, Averaging::macro);
  if (set.multi_label) {
    m.aupr = defined_column_mean(set, [](auto s, auto t) { return average_precision(s, t); });
  } else {
    m.auc_roc = defined_column_mean(set, [](auto s, auto t) { return roc_auc(s, t); });
  }
  // Loss from the stored probabilities would lose precision; recompute from logits.
  Rng unused(0);
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += config.batch_size) {
    const std::size_t end = std::min(indices.size(), start + config.batch_size);
    std::span<const std::size_t> batch(indices.data() + start, end - start);
    ClassifierOutput out = model.forward(data, batch, Mode::eval, unused);
    loss_sum += task_loss(data, batch, out.logits).loss * static_cast<double>(batch.size());
  }
  m.loss = loss_sum / static_cast<double>(indices.size());
  return m;
}

std::size_t select_best(std::span<const EpochRecord> epochs, SelectionMetric metric) {
  if (epochs.empty()) throw InputError("select_best: no epochs recorded");
  std::size_t best = 0;
  for (std::size_t i = 1; i < epochs.size(); ++i) {
    if (metric_value(epochs[i].validation, metric) > metric_value(epochs[best].validation, metric)) best = i;
  }
  return epochs[best].epoch;
}

std::size_t select_best(const RunReport& report, Task task) {
  return select_best(report.epochs, task == Task::multi_label ? SelectionMetric::f1 : SelectionMetric::accuracy);
}

std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InputError("kfold_split: k must be at least 2");
  if (n < k) throw InputError("kfold_split: " + std::to_string(n) + " examples cannot fill " + std::to_string(k) + " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0xF01D));
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<Fold> folds(k);
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].validation.assign(order.begin() + start, order.begin() + start + size);
    folds[f].train.reserve(n - size);
    folds[f].train.insert(folds[f].train.end(), order.begin(), order.begin() + start);
    folds[f].train.insert(folds[f].train.end(), order.begin() + start + size, order.end());
    start += size;
  }
  return folds;
}

Split train_val_test_split(std::size_t n, double val_fraction, double test_fraction, std::uint64_t seed) {
  if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0) {
    throw ConfigError("val_fraction/test_fraction: must be non-negative and sum below 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5B117));
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_val + n_test >= n) throw InputError("split leaves no training examples");
  Split s;
  s.validation.assign(order.begin(), order.begin() + n_val);
  s.test.assign(order.begin() + n_val, order.begin() + n_val + n_test);
  s.train.assign(order.begin() + n_val + n_test, order.end());
  return s;
}

TrainingOutcome train_model(Classifier& model, const Dataset& data, const Split& split, const TrainConfig& config) {
  config.validate();
  data.validate();
  if (split.validation.empty()) throw InputError("train_model: empty validation split");
  const auto start = Clock::now();
  const SelectionMetric selection = config.selection_for(data.task);

  TrainingOutcome outcome;
  RunReport& report = outcome.report;
  report.selection = selection;
  AdamW optimizer;
  double best = -1.0;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    const auto epoch_start = Clock::now();
    EpochRecord record;
    record.epoch = e + 1;
    record.learning_rate = cosine_lr(e, config.epochs, config.lr, config.lr_min);
    const EpochStats stats = train_epoch(model, data, split.train, config, optimizer, e, record.learning_rate);
    record.train_loss = stats.mean_loss;
    record.max_grad_norm = stats.max_grad_norm;
    record.validation = evaluate(model, data, split.validation, config);
    record.wall_seconds = seconds_since(epoch_start);
    const double value = metric_value(record.validation, selection);
    if (value > best) {
      best = value;
      outcome.best_params = model.params();
      outcome.best_buffers = model.buffers();
    }
    report.epochs.push_back(record);
  }
  report.best_epoch = select_best(report.epochs, selection);
  report.best_metric = metric_value(report.epochs[report.best_epoch - 1].validation, selection);

  model.params() = outcome.best_params;
  model.buffers() = outcome.best_buffers;
  if (!split.test.empty()) report.test = evaluate(model, data, split.test, config);
  report.total_seconds = seconds_since(start);
  return outcome;
}

}  // namespace inceptive
