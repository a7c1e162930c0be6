#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "inceptive/error.hpp"
#include "inceptive/ops.hpp"
#include "inceptive/training.hpp"
#include "support.hpp"

using namespace inceptive;
using inceptive::testing::random_tensor;

namespace {

// Frozen-embedding dataset whose class is the sign pattern of a feature
// summed over the sequence.
Dataset frozen_dataset(std::size_t n, Task task, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.task = task;
  d.n_classes = classes;
  Tensor H = random_tensor({n, 6, 8}, rng);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t k = static_cast<std::uint32_t>(rng.below(classes));
    for (std::size_t t = 0; t < 6; ++t) H.at({i, t, k}) += 1.5;
    if (task == Task::multi_label) {
      std::vector<std::uint8_t> bits(classes, 0);
      bits[k] = 1;
      d.labels.emplace_back(bits);
    } else {
      d.labels.emplace_back(k);
    }
  }
  d.hidden = std::move(H);
  return d;
}

ClassifierConfig small_head(Task task, std::size_t classes) {
  ClassifierConfig c;
  c.model.hidden_dim = 8;
  c.model.channels = 2;
  c.model.n_heads = 2;
  c.model.dense_dim = 8;
  c.model.n_classes = classes;
  c.model.task = task;
  return c;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST(SoftmaxCrossEntropy, HandValuesAndStability) {
  const std::uint32_t zero[] = {0};
  EXPECT_NEAR(softmax_cross_entropy(Tensor({1, 2}), zero).loss, std::log(2.0), 1e-15);
  LossResult big = softmax_cross_entropy(Tensor({1, 2}, std::vector<double>{1000, 0}), zero);
  EXPECT_NEAR(big.loss, 0.0, 1e-12);
  EXPECT_TRUE(big.dlogits.all_finite());
  const std::uint32_t bad[] = {2};
  EXPECT_THROW(softmax_cross_entropy(Tensor({1, 2}), bad), LabelError);
}

TEST(SoftmaxCrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  ParamStore p;
  p.add("z", random_tensor({4, 3}, rng, -2, 2));
  const std::uint32_t t[] = {0, 2, 1, 2};
  p.grad("z") = softmax_cross_entropy(p.value("z"), t).dlogits;
  EXPECT_LT(grad_check([&](const ParamStore& s) { return softmax_cross_entropy(s.value("z"), t).loss; }, p, 1e-5), 1e-6);
}

TEST(BceWithLogits, HandValuesAndStability) {
  EXPECT_NEAR(bce_with_logits(Tensor({1, 1}), Tensor({1, 1}, 1.0)).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_with_logits(Tensor({1, 1}, 1000.0), Tensor({1, 1}, 1.0)).loss, 0.0, 1e-12);
  EXPECT_NEAR(bce_with_logits(Tensor({1, 1}, 1000.0), Tensor({1, 1}, 0.0)).loss, 1000.0, 1e-9);
  EXPECT_THROW(bce_with_logits(Tensor({1, 1}), Tensor({1, 1}, 0.5)), LabelError);
}

TEST(BceWithLogits, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  ParamStore p;
  p.add("z", random_tensor({2, 3}, rng, -3, 3));
  Tensor y({2, 3}, std::vector<double>{1, 0, 1, 0, 0, 1});
  p.grad("z") = bce_with_logits(p.value("z"), y).dlogits;
  EXPECT_LT(grad_check([&](const ParamStore& s) { return bce_with_logits(s.value("z"), y).loss; }, p, 1e-5), 1e-6);
}

TEST(AdamW, SingleStepHandValue) {
  ParamStore p;
  p.add("theta", Tensor({1}, 1.0));
  p.grad("theta")[0] = 1.0;
  AdamW opt;
  opt.step(p, 0.1, 0.01);
  // m_hat = v_hat = 1: 1 - 0.1 * 1 / (1 + 1e-8) - 0.1 * 0.01 * 1
  EXPECT_NEAR(p.value("theta")[0], 0.899, 1e-6);
  EXPECT_NEAR(p.value("theta")[0], 1.0 - 0.1 / (1.0 + 1e-8) - 0.001, 1e-15);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, ZeroGradientAndDecayOnly) {
  ParamStore p;
  p.add("w", Tensor({2}, std::vector<double>{1.5, -2.0}));
  p.add("b", Tensor({1}, 0.7), false);
  AdamW opt;
  for (int i = 0; i < 5; ++i) opt.step(p, 0.1, 0.0);
  EXPECT_EQ(p.value("w")[0], 1.5);
  EXPECT_EQ(p.value("b")[0], 0.7);
  for (int i = 0; i < 3; ++i) opt.step(p, 0.1, 0.5);
  EXPECT_NEAR(p.value("w")[0], 1.5 * std::pow(1 - 0.05, 3), 1e-15);
  EXPECT_NEAR(p.value("w")[1], -2.0 * std::pow(1 - 0.05, 3), 1e-15);
  EXPECT_EQ(p.value("b")[0], 0.7);  // no decay on biases
}

TEST(AdamW, ReducesToDecayedSgd) {
  AdamWConfig cfg;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  cfg.eps = 1e6;
  ParamStore p;
  p.add("w", Tensor({3}, std::vector<double>{0.5, -1.0, 2.0}));
  AdamW opt(cfg);
  const double lr = 1e3, wd = 1e-4;
  for (int step = 0; step < 4; ++step) {
    const Tensor before = p.value("w");
    p.grad("w") = Tensor({3}, std::vector<double>{0.3, -0.1 * step, 0.05});
    opt.step(p, lr, wd);
    for (std::size_t i = 0; i < 3; ++i) {
      const double sgd = before[i] - (lr / cfg.eps) * p.grad("w")[i] - lr * wd * before[i];
      EXPECT_NEAR(p.value("w")[i], sgd, 1e-9);
    }
  }
}

TEST(AdamW, NanGradientLeavesParametersUntouched) {
  ParamStore p;
  p.add("a", Tensor({1}, 1.0));
  p.add("b", Tensor({1}, 2.0));
  p.grad("a")[0] = 1.0;
  p.grad("b")[0] = std::nan("");
  AdamW opt;
  EXPECT_THROW(opt.step(p, 0.1, 0.0), NumericError);
  EXPECT_EQ(p.value("a")[0], 1.0);
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(CosineLr, EndpointsAndMidpoint) {
  EXPECT_EQ(cosine_lr(0, 12, 1e-3, 1e-5), 1e-3);
  EXPECT_EQ(cosine_lr(12, 12, 1e-3, 1e-5), 1e-5);
  EXPECT_NEAR(cosine_lr(6, 12, 1e-3, 1e-5), (1e-3 + 1e-5) / 2, 1e-18);
  EXPECT_THROW(cosine_lr(13, 12, 1, 0), ConfigError);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  t.validate();
  t.epochs = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t.epochs = 1;
  t.sigmoid_threshold = 1.0;
  EXPECT_THROW(t.validate(), ConfigError);
  t.sigmoid_threshold = 0.5;
  t.lr = 0.0;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(KFold, DegenerateAndCounting) {
  auto loo = kfold_split(10, 10, 1);
  for (const Fold& f : loo) EXPECT_EQ(f.validation.size(), 1u);
  auto folds = kfold_split(23, 10, 2);
  std::multiset<std::size_t> sizes;
  for (const Fold& f : folds) sizes.insert(f.validation.size());
  EXPECT_EQ(sizes.count(3), 3u);
  EXPECT_EQ(sizes.count(2), 7u);
  EXPECT_THROW(kfold_split(5, 10, 0), InputError);
}

TEST(KFold, PartitionProperty) {
  Rng rng(3);
  for (int c = 0; c < 100; ++c) {
    const std::size_t k = 2 + rng.below(12);
    const std::size_t n = k + rng.below(60);
    auto folds = kfold_split(n, k, rng.next_u64());
    std::vector<int> seen(n, 0);
    std::size_t lo = n, hi = 0;
    for (const Fold& f : folds) {
      lo = std::min(lo, f.validation.size());
      hi = std::max(hi, f.validation.size());
      EXPECT_EQ(f.train.size() + f.validation.size(), n);
      std::set<std::size_t> train(f.train.begin(), f.train.end());
      for (std::size_t i : f.validation) {
        ++seen[i];
        EXPECT_FALSE(train.contains(i));
      }
    }
    EXPECT_LE(hi - lo, 1u);
    for (int s : seen) EXPECT_EQ(s, 1);
  }
}

TEST(SelectBest, ArgmaxTiesAndCrossedMetric) {
  auto records = [](std::vector<double> acc, std::vector<double> f1) {
    std::vector<EpochRecord> r;
    for (std::size_t i = 0; i < acc.size(); ++i) {
      EpochRecord e;
      e.epoch = i + 1;
      e.validation.accuracy = acc[i];
      e.validation.micro.f1 = f1[i];
      r.push_back(e);
    }
    return r;
  };
  EXPECT_EQ(select_best(records({0.7, 0.9, 0.8}, {0, 0, 0}), SelectionMetric::accuracy), 2u);
  EXPECT_EQ(select_best(records({0.8, 0.8}, {0, 0}), SelectionMetric::accuracy), 1u);
  RunReport report;
  report.epochs = records({0.9, 0.6, 0.7}, {0.2, 0.5, 0.4});
  EXPECT_EQ(select_best(report, Task::multi_label), 2u);
  EXPECT_EQ(select_best(report, Task::multi_class), 1u);
  EXPECT_THROW(select_best(std::vector<EpochRecord>{}, SelectionMetric::accuracy), InputError);
}

TEST(TrainEpoch, ZeroLrFreezesParameters) {
  Dataset d = frozen_dataset(20, Task::multi_class, 3, 4);
  Classifier model(small_head(Task::multi_class, 3), 1);
  const ParamStore before = model.params();
  TrainConfig t;
  t.batch_size = 8;
  AdamW opt;
  const auto idx = iota_indices(20);
  EpochStats s = train_epoch(model, d, idx, t, opt, 0, 0.0);
  EXPECT_GT(s.mean_loss, 0.0);
  auto it = before.begin();
  for (const auto& [name, p] : model.params()) {
    EXPECT_TRUE(p.value == it->second.value) << name;
    ++it;
  }
}

TEST(TrainEpoch, DeterministicAndClipped) {
  Dataset d = frozen_dataset(40, Task::multi_class, 3, 5);
  TrainConfig t;
  t.batch_size = 16;
  t.seed = 9;
  t.max_grad_norm = 0.05;
  const auto idx = iota_indices(40);
  std::vector<double> losses[2];
  for (int rep = 0; rep < 2; ++rep) {
    Classifier model(small_head(Task::multi_class, 3), 3);
    AdamW opt;
    for (std::size_t e = 0; e < 3; ++e) losses[rep].push_back(train_epoch(model, d, idx, t, opt, e, 1e-2).mean_loss);
  }
  EXPECT_EQ(losses[0], losses[1]);

  // After clipping the global norm never exceeds the limit.
  Classifier model(small_head(Task::multi_class, 3), 3);
  Rng rng(1);
  model.params().zero_grad();
  const std::span<const std::size_t> batch(idx.data(), 16);
  ClassifierOutput out = model.forward(d, batch, Mode::train, rng);
  model.backward(task_loss(d, batch, out.logits).dlogits);
  const double pre = clip_global_norm(model.params(), t.max_grad_norm);
  EXPECT_GT(pre, t.max_grad_norm);
  EXPECT_LE(global_grad_norm(model.params()), t.max_grad_norm + 1e-9);
}

TEST(TrainEpoch, SingleBatchOverfit) {
  Dataset d = frozen_dataset(8, Task::multi_class, 3, 6);
  ClassifierConfig cc = small_head(Task::multi_class, 3);
  cc.model.dropout_rate = 0.0;
  Classifier model(cc, 2);
  TrainConfig t;
  t.batch_size = 8;
  t.epochs = 200;
  t.weight_decay = 0.0;
  const auto idx = iota_indices(8);
  AdamW opt;
  std::vector<double> losses;
  for (std::size_t e = 0; e < t.epochs; ++e) {
    losses.push_back(train_epoch(model, d, idx, t, opt, e, cosine_lr(e, t.epochs, 1e-2, 0.0)).mean_loss);
  }
  EXPECT_EQ(evaluate(model, d, idx, t).accuracy, 1.0);
  for (std::size_t w = 20; w + 20 <= losses.size(); w += 20) {
    const double prev = std::accumulate(losses.begin() + (w - 20), losses.begin() + w, 0.0);
    const double cur = std::accumulate(losses.begin() + w, losses.begin() + w + 20, 0.0);
    EXPECT_LE(cur, prev) << "window at epoch " << w;
  }
}

TEST(Evaluate, ConstantPredictorOnBalancedBinary) {
  Dataset d = frozen_dataset(10, Task::binary, 2, 7);
  for (std::size_t i = 0; i < 10; ++i) d.labels[i] = Label{static_cast<std::uint32_t>(i % 2)};
  ClassifierConfig cc = small_head(Task::binary, 2);
  Classifier model(cc, 1);
  for (auto& [name, p] : model.params()) p.value.fill(0.0);
  TrainConfig t;
  EvalMetrics m = evaluate(model, d, iota_indices(10), t);
  EXPECT_EQ(m.accuracy, 0.5);
  ASSERT_TRUE(m.auc_roc.has_value());
  EXPECT_EQ(*m.auc_roc, 0.5);
  EXPECT_THROW(evaluate(model, d, std::vector<std::size_t>{}, t), InputError);
}

TEST(Evaluate, PureAndConsistentWithMetricOps) {
  for (Task task : {Task::multi_class, Task::multi_label}) {
    Dataset d = frozen_dataset(30, task, 3, 8);
    Classifier model(small_head(task, 3), 4);
    TrainConfig t;
    t.batch_size = 7;
    const auto idx = iota_indices(30);
    EvalMetrics a = evaluate(model, d, idx, t);
    EvalMetrics b = evaluate(model, d, idx, t);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_EQ(a.micro.f1, b.micro.f1);
    PredictionSet set = predict(model, d, idx, t);
    EXPECT_EQ(a.accuracy, accuracy(set));
    EXPECT_EQ(a.macro.f1, precision_recall_f1(set, Averaging::macro).f1);
    if (task == Task::multi_label) {
      EXPECT_TRUE(a.aupr.has_value());
      EXPECT_FALSE(a.auc_roc.has_value());
      EXPECT_NEAR(*a.aupr, macro_average_precision(set), 1e-15);
    } else {
      EXPECT_NEAR(*a.auc_roc, macro_roc_auc(set), 1e-15);
    }
  }
}

TEST(TrainModel, SelectsAndRestoresBestEpoch) {
  Dataset d = frozen_dataset(60, Task::multi_class, 3, 10);
  Split split = train_val_test_split(60, 0.2, 0.2, 1);
  EXPECT_EQ(split.train.size() + split.validation.size() + split.test.size(), 60u);
  TrainConfig t;
  t.epochs = 4;
  t.batch_size = 12;
  t.lr = 1e-2;
  Classifier model(small_head(Task::multi_class, 3), 5);
  TrainingOutcome out = train_model(model, d, split, t);
  ASSERT_EQ(out.report.epochs.size(), 4u);
  EXPECT_EQ(out.report.best_epoch, select_best(out.report, Task::multi_class));
  EXPECT_EQ(out.report.epochs.front().learning_rate, 1e-2);
  ASSERT_TRUE(out.report.test.has_value());
  EvalMetrics val = evaluate(model, d, split.validation, t);
  EXPECT_EQ(val.accuracy, out.report.best_metric);
}
