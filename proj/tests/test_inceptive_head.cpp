#include <gtest/gtest.h>

#include <cmath>

#include "inceptive/error.hpp"
#include "inceptive/head.hpp"
#include "inceptive/ops.hpp"
#include "inceptive/training.hpp"
#include "support.hpp"

using namespace inceptive;
using inceptive::testing::probe;
using inceptive::testing::random_tensor;

namespace {

ModelConfig toy_config(Variant variant = Variant::full) {
  ModelConfig c;
  c.hidden_dim = 16;
  c.channels = 4;
  c.n_heads = 2;
  c.head_dim = 8;
  c.dense_dim = 8;
  c.n_classes = 3;
  c.variant = variant;
  return c;
}

ModelConfig full_scale_config(Variant variant = Variant::full) {
  ModelConfig c;  // defaults: d=768, c=32, h=8, d_D=512
  c.n_classes = 4;
  c.variant = variant;
  return c;
}

}  // namespace

TEST(ModelConfig, DerivedDimsAndValidation) {
  ModelConfig c = full_scale_config();
  EXPECT_EQ(c.enriched_dim(), 896u);
  EXPECT_EQ(c.attention_dim(), 112u);
  c.validate();
  c.head_dim = 4 * 896;
  EXPECT_THROW(c.validate(), ConfigError);
  ModelConfig b = toy_config();
  b.task = Task::binary;
  EXPECT_THROW(b.validate(), ConfigError);
  b.n_classes = 2;
  b.validate();
  EXPECT_EQ(b.output_dim(), 1u);
  EXPECT_EQ(parse_variant("no_attn"), Variant::no_attn);
  EXPECT_THROW(parse_variant("none"), ConfigError);
}

TEST(InitParams, NamesInitAndDeterminism) {
  ModelConfig c = toy_config();
  Rng r1(1), r2(1);
  ParamStore a = init_params(c, r1), b = init_params(c, r2);
  ASSERT_EQ(a.size(), b.size());
  auto ib = b.begin();
  for (const auto& [name, p] : a) {
    EXPECT_EQ(name, ib->first);
    EXPECT_TRUE(p.value == ib->second.value);
    ++ib;
  }
  for (std::size_t k : kKernelSizes) {
    const std::string pre = branch_prefix(k);
    EXPECT_EQ(a.value(pre + ".weight").shape(), (Shape{4, k, 16}));
    for (double v : a.value(pre + ".bn.scale").data()) EXPECT_EQ(v, 1.0);
    for (double v : a.value(pre + ".bias").data()) EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(a.value("attention.head1.w_q").shape(), (Shape{32, 8}));
  EXPECT_EQ(a.value("attention.w_o").shape(), (Shape{16, 32}));
  EXPECT_EQ(a.value("classifier.weight").shape(), (Shape{8, 3}));
}

TEST(InitParams, VariantsUseSubsetsPlusOwnProjection) {
  Rng rng(2);
  ParamStore full = init_params(toy_config(), rng);
  ParamStore no_attn = init_params(toy_config(Variant::no_attn), rng);
  ParamStore no_dense = init_params(toy_config(Variant::no_dense), rng);
  for (const auto& [name, p] : no_attn) {
    ASSERT_TRUE(full.contains(name)) << name;
    EXPECT_EQ(full.value(name).shape(), p.value.shape());
  }
  EXPECT_FALSE(no_attn.contains("attention.w_o"));
  EXPECT_FALSE(no_dense.contains("dense.weight"));
  EXPECT_EQ(no_dense.value("classifier.weight").shape(), (Shape{32, 3}));
  BufferStore buffers = init_buffers(toy_config());
  Tensor H = random_tensor({2, 5, 16}, rng);
  EXPECT_THROW(head_forward(toy_config(Variant::no_dense), full, buffers, H, Mode::eval, rng), DimensionError);
  EXPECT_THROW(head_forward(toy_config(), no_attn, buffers, H, Mode::eval, rng), DimensionError);
}

TEST(Inception, PerBranchOracleAndZeroCase) {
  ModelConfig c = toy_config();
  c.channels = 1;
  c.hidden_dim = 3;
  Rng rng(3);
  ParamStore p = init_params(c, rng);
  BufferStore buf = init_buffers(c);
  Tensor H = random_tensor({2, 4, 3}, rng);
  auto r = inception_forward(c, p, buf, H, Mode::eval);
  ASSERT_EQ(r.features.shape(), (Shape{2, 4, 4}));
  for (std::size_t b = 0; b < kKernelSizes.size(); ++b) {
    const std::string pre = branch_prefix(kKernelSizes[b]);
    Tensor y = conv1d_forward(ConvBranch::with_kernel(kKernelSizes[b]), p.value(pre + ".weight"), p.value(pre + ".bias"), H);
    const double inv = 1.0 / std::sqrt(1.0 + c.bn_eps);  // running stats 0 / 1
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(r.features[i * 4 + b], std::max(0.0, y[i] * inv), 1e-12);
  }
  for (std::size_t k : kKernelSizes) p.at(branch_prefix(k) + ".weight").value.fill(0.0);
  const Tensor zeroed = inception_forward(c, p, buf, H, Mode::train).features;
  for (double v : zeroed.data()) EXPECT_EQ(v, 0.0);
}

TEST(Enrich, ResidualSliceIsBitwise) {
  Rng rng(4);
  Tensor H = random_tensor({2, 3, 5}, rng);
  Tensor C = random_tensor({2, 3, 8}, rng);
  Tensor R = enrich(H, C);
  EXPECT_EQ(R.shape(), (Shape{2, 3, 13}));
  for (std::size_t row = 0; row < 6; ++row)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(R[row * 13 + j], H[row * 5 + j]);
  Tensor Z = enrich(H, Tensor({2, 3, 8}));
  for (std::size_t row = 0; row < 6; ++row)
    for (std::size_t j = 5; j < 13; ++j) EXPECT_EQ(Z[row * 13 + j], 0.0);
}

TEST(Pool, HandMeanConstantAndPermutation) {
  Tensor P = adaptive_avg_pool(Tensor({1, 2, 2}, std::vector<double>{1, 5, 3, 7}));
  EXPECT_EQ(P[0], 2);
  EXPECT_EQ(P[1], 6);
  Tensor c = adaptive_avg_pool(Tensor({1, 4, 3}, 2.5));
  for (double v : c.data()) EXPECT_EQ(v, 2.5);
  Rng rng(5);
  Tensor A = random_tensor({1, 5, 3}, rng);
  Tensor perm({1, 5, 3});
  const std::size_t order[] = {3, 0, 4, 1, 2};
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) perm.at({0, i, j}) = A.at({0, order[i], j});
  EXPECT_LT(max_abs_diff(adaptive_avg_pool(perm), adaptive_avg_pool(A)), 1e-15);
}

TEST(MultiHead, UniformAttentionGivesMeanToken) {
  Rng rng(6);
  ParamStore p;
  add_attention_params(p, "attention", 1, 3, 3, 3, rng);
  p.at("attention.head0.w_q").value.fill(0.0);
  p.at("attention.head0.w_k").value.fill(0.0);
  p.at("attention.head0.w_v").value = Tensor::identity(3);
  p.at("attention.w_o").value = Tensor::identity(3);
  Tensor R = random_tensor({1, 4, 3}, rng);
  auto r = multi_head_attention(p, "attention", 1, R);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t e = 0; e < 3; ++e) {
      double mean = 0;
      for (std::size_t j = 0; j < 4; ++j) mean += R.at({0, j, e}) / 4;
      EXPECT_NEAR(r.out.at({0, i, e}), mean, 1e-15);
    }
  auto one = multi_head_attention(p, "attention", 1, random_tensor({1, 1, 3}, rng));
  EXPECT_EQ(attention_received(one.weights)[0].received, std::vector<double>{1.0});
}

TEST(MultiHead, MatchesFusedOracle) {
  Rng rng(7);
  ParamStore p;
  add_attention_params(p, "attention", 2, 4, 2, 4, rng);
  Tensor R = random_tensor({1, 3, 4}, rng);
  auto r = multi_head_attention(p, "attention", 2, R);
  Tensor concat({3, 4});
  for (std::size_t h = 0; h < 2; ++h) {
    const std::string pre = "attention.head" + std::to_string(h);
    const Tensor &Wq = p.value(pre + ".w_q"), &Wk = p.value(pre + ".w_k"), &Wv = p.value(pre + ".w_v");
    auto proj = [&](const Tensor& W, std::size_t i, std::size_t a) {
      double s = 0;
      for (std::size_t e = 0; e < 4; ++e) s += R.at({0, i, e}) * W.at({e, a});
      return s;
    };
    for (std::size_t i = 0; i < 3; ++i) {
      double w[3], z = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        double dot = 0;
        for (std::size_t a = 0; a < 2; ++a) dot += proj(Wq, i, a) * proj(Wk, j, a);
        w[j] = std::exp(dot / std::sqrt(2.0));
        z += w[j];
      }
      for (std::size_t a = 0; a < 2; ++a) {
        double o = 0;
        for (std::size_t j = 0; j < 3; ++j) o += w[j] / z * proj(Wv, j, a);
        concat.at({i, h * 2 + a}) = o;
      }
    }
  }
  Tensor expect = matmul(concat, p.value("attention.w_o"));
  EXPECT_LT(max_abs_diff(r.out.reshaped({3, 4}), expect), 1e-12);
}

TEST(AttentionReceived, HandCases) {
  Tensor uniform({1, 2, 4, 4}, 0.25);
  const auto flat = attention_received(uniform);
  for (double v : flat[0].received) EXPECT_DOUBLE_EQ(v, 0.25);
  Tensor point({1, 1, 3, 3});
  for (std::size_t i = 0; i < 3; ++i) point.at({0, 0, i, 0}) = 1.0;
  EXPECT_EQ(attention_received(point)[0].received, (std::vector<double>{1, 0, 0}));
  // Rows (h0: [1,0],[0.5,0.5]; h1: [0.2,0.8],[0.6,0.4]) -> mean [0.575, 0.425].
  Tensor two({1, 2, 2, 2}, std::vector<double>{1, 0, 0.5, 0.5, 0.2, 0.8, 0.6, 0.4});
  auto m = attention_received(two)[0].received;
  EXPECT_NEAR(m[0], 0.575, 1e-15);
  EXPECT_NEAR(m[1], 0.425, 1e-15);
  Tensor bad({1, 1, 2, 2}, 0.4);
  EXPECT_THROW(attention_received(bad), DataError);
}

TEST(Head, ShapeChainAtFullScale) {
  ModelConfig c = full_scale_config();
  Rng rng(8);
  ParamStore p = init_params(c, rng);
  BufferStore buf = init_buffers(c);
  Tensor H = random_tensor({2, 6, 768}, rng);
  HeadResult r = head_forward(c, p, buf, H, Mode::eval, rng);
  EXPECT_EQ(r.cache.inception.branches.size(), 4u);
  EXPECT_EQ(r.enriched.shape(), (Shape{2, 6, 896}));
  EXPECT_EQ(r.cache.attention->concat.shape(), (Shape{2, 6, 896}));
  EXPECT_EQ(r.cache.pooled.shape(), (Shape{2, 896}));
  EXPECT_EQ(r.cache.classifier_in.shape(), (Shape{2, 512}));
  EXPECT_EQ(r.logits.shape(), (Shape{2, 4}));
}

TEST(Head, ZeroNetworkGivesUniformSoftmax) {
  ModelConfig c = toy_config();
  Rng rng(9);
  ParamStore p = init_params(c, rng);
  for (auto& [name, param] : p) param.value.fill(0.0);
  BufferStore buf = init_buffers(c);
  HeadResult r = head_forward(c, p, buf, random_tensor({3, 5, 16}, rng), Mode::eval, rng);
  for (double v : r.logits.data()) EXPECT_EQ(v, 0.0);
  const Tensor probs = softmax_rows(r.logits);
  for (double v : probs.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3);
}

TEST(Head, VariantsAgreeUpToEnrich) {
  Rng rng(10);
  ParamStore full = init_params(toy_config(), rng);
  ParamStore no_attn = full;
  for (const char* n : {"attention.head0.w_q", "attention.head0.w_k", "attention.head0.w_v", "attention.head1.w_q",
                        "attention.head1.w_k", "attention.head1.w_v", "attention.w_o"}) {
    ParamStore trimmed;
    for (auto& [name, p] : no_attn)
      if (name != n) trimmed.add(name, p.value, p.decay);
    no_attn = std::move(trimmed);
  }
  ParamStore adj;
  for (auto& [name, p] : no_attn)
    adj.add(name, name == "dense.weight" ? glorot_uniform({32, 8}, 32, 8, rng) : p.value, p.decay);
  BufferStore b1 = init_buffers(toy_config()), b2 = init_buffers(toy_config());
  Tensor H = random_tensor({2, 5, 16}, rng);
  HeadResult a = head_forward(toy_config(), full, b1, H, Mode::eval, rng);
  HeadResult b = head_forward(toy_config(Variant::no_attn), adj, b2, H, Mode::eval, rng);
  EXPECT_TRUE(a.enriched == b.enriched);
  EXPECT_FALSE(b.attention.has_value());
  EXPECT_GT(max_abs_diff(a.logits, b.logits), 0.0);
}

TEST(Head, ResidualPreservedInTrainAndEval) {
  ModelConfig c = toy_config();
  c.dropout_rate = 0.3;
  Rng rng(11);
  ParamStore p = init_params(c, rng);
  BufferStore buf = init_buffers(c);
  Tensor H = random_tensor({2, 6, 16}, rng);
  for (Mode mode : {Mode::train, Mode::eval}) {
    Rng d1(5), d2(5);
    HeadResult r = head_forward(c, p, buf, H, mode, d1);
    Tensor expect = dropout(c.dropout_rate, mode, H, d2).y;
    for (std::size_t row = 0; row < 12; ++row)
      for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(r.enriched[row * 32 + j], expect[row * 16 + j]);
  }
}

TEST(Head, ReceivedSumsToOne) {
  ModelConfig c = toy_config();
  Rng rng(12);
  ParamStore p = init_params(c, rng);
  BufferStore buf = init_buffers(c);
  HeadResult r = head_forward(c, p, buf, random_tensor({4, 9, 16}, rng, -3, 3), Mode::eval, rng);
  for (const AttentionMap& m : attention_received(*r.attention)) {
    double s = 0;
    for (double v : m.received) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Head, FullPipelineGradientCheckEveryVariant) {
  for (Variant v : {Variant::full, Variant::no_attn, Variant::no_dense}) {
    for (Mode mode : {Mode::train, Mode::eval}) {
      ModelConfig c = toy_config(v);
      Rng rng(13);
      ParamStore p = init_params(c, rng);
      const Tensor H = random_tensor({2, 8, 16}, rng);
      p.add("input", H);
      const std::uint32_t targets[] = {0, 2};
      auto loss = [&](const ParamStore& s, HeadResult* keep) {
        BufferStore buf = init_buffers(c);
        Rng drop(99);
        HeadResult r = head_forward(c, s, buf, s.value("input"), mode, drop);
        double value = softmax_cross_entropy(r.logits, targets).loss;
        if (keep) *keep = std::move(r);
        return value;
      };
      HeadResult r;
      loss(p, &r);
      p.zero_grad();
      p.grad("input") = head_backward(c, p, r.cache, softmax_cross_entropy(r.logits, targets).dlogits);
      auto report = grad_check_report([&](const ParamStore& s) { return loss(s, nullptr); }, p, 1e-5);
      for (const auto& e : report.entries) {
        const std::string where = std::string(to_string(v)) + (mode == Mode::train ? " train " : " eval ") + e.name;
        // Batch statistics subtract any per-channel shift, so in train mode the
        // conv bias gradient is exactly zero and the central difference is
        // pure roundoff. Both sides must then be zero to working precision.
        const bool structural_zero = mode == Mode::train && e.name.starts_with("inception.branch_") &&
                                     e.name.ends_with(".bias");
        if (structural_zero) {
          for (double g : p.grad(e.name).data()) EXPECT_LT(std::abs(g), 1e-14) << where;
          EXPECT_LT(std::abs(e.numeric), 1e-9) << where;
          continue;
        }
        EXPECT_LT(e.max_rel_error, 1e-4) << where << " analytic " << e.analytic << " numeric " << e.numeric;
      }
    }
  }
}

TEST(Baseline, FirstTokenAffineAndShapes) {
  ModelConfig c = toy_config();
  c.hidden_dim = 3;
  c.n_classes = 3;
  c.dropout_rate = 0.0;
  Rng rng(14);
  ParamStore p = init_baseline_params(c, rng);
  p.at("classifier.weight").value = Tensor::identity(3);
  p.at("classifier.bias").value = Tensor({3}, std::vector<double>{1, 2, 3});
  Tensor H = random_tensor({2, 7, 3}, rng);
  BaselineResult r = baseline_cls_forward(c, p, H, Mode::eval, rng);
  EXPECT_EQ(r.logits.shape(), (Shape{2, 3}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.logits.at({b, j}), H.at({b, 0, j}) + (j + 1.0));
  p.at("classifier.weight").value.fill(0.0);
  p.at("classifier.bias").value.fill(0.0);
  const Tensor logits = baseline_cls_forward(c, p, H, Mode::eval, rng).logits;
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
}

TEST(Baseline, BackwardMatchesFiniteDifferences) {
  ModelConfig c = toy_config();
  c.dropout_rate = 0.2;
  Rng rng(15);
  ParamStore p = init_baseline_params(c, rng);
  p.add("input", random_tensor({3, 4, 16}, rng));
  const Tensor w = random_tensor({3, 3}, rng);
  auto f = [&](const ParamStore& s) {
    Rng d(4);
    return probe(baseline_cls_forward(c, s, s.value("input"), Mode::train, d).logits, w);
  };
  Rng d(4);
  BaselineResult r = baseline_cls_forward(c, p, p.value("input"), Mode::train, d);
  p.zero_grad();
  p.grad("input") = baseline_cls_backward(c, p, r.cache, w);
  EXPECT_LT(grad_check(f, p, 1e-5), 1e-6);
}
