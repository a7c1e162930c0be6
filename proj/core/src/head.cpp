#include "inceptive/head.hpp"

#include <cmath>

#include "inceptive/error.hpp"
#include "inceptive/ops.hpp"

namespace inceptive {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::multi_class: return "multi-class";
    case Task::binary: return "binary";
    case Task::multi_label: return "multi-label";
  }
  return "?";
}

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::no_attn: return "no_attn";
    case Variant::no_dense: return "no_dense";
  }
  return "?";
}

Task parse_task(std::string_view text) {
  if (text == "multi-class" || text == "multi_class") return Task::multi_class;
  if (text == "binary") return Task::binary;
  if (text == "multi-label" || text == "multi_label") return Task::multi_label;
  throw ConfigError("unknown task '" + std::string(text) + "'");
}

Variant parse_variant(std::string_view text) {
  if (text == "full") return Variant::full;
  if (text == "no_attn") return Variant::no_attn;
  if (text == "no_dense") return Variant::no_dense;
  throw ConfigError("unknown variant '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  if (hidden_dim == 0) fail("d", "must be positive");
  if (channels == 0) fail("channels", "must be positive");
  if (has_attention()) {
    if (n_heads == 0) fail("n_heads", "must be positive");
    if (attention_dim() == 0) fail("head_dim", "resolves to zero; set it explicitly");
    if (n_heads * attention_dim() > 4 * enriched_dim()) fail("head_dim", "n_heads * head_dim exceeds 4 * d_R");
  }
  if (has_dense() && dense_dim < 2) fail("dense_dim", "must be at least 2 (layer norm over it)");
  switch (task) {
    case Task::multi_class:
      if (n_classes < 2) fail("n_classes", "multi-class needs at least 2 classes");
      break;
    case Task::binary:
      if (n_classes != 2) fail("n_classes", "binary tasks have exactly 2 classes");
      break;
    case Task::multi_label:
      if (n_classes < 1) fail("n_classes", "multi-label needs at least 1 label");
      break;
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout", "must lie in [0, 1)");
  if (!(bn_eps > 0.0)) fail("bn_eps", "must be positive");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) fail("bn_momentum", "must lie in [0, 1]");
}

std::string branch_prefix(std::size_t kernel_size) { return "inception.branch_k" + std::to_string(kernel_size); }

namespace {

const std::string kAttention = "attention";

std::size_t classifier_input_dim(const ModelConfig& config) {
  return config.has_dense() ? config.dense_dim : config.enriched_dim();
}

}  // namespace

ParamStore init_params(const ModelConfig& config, Rng& rng) {
  config.validate();
  ParamStore params;
  const std::size_t d = config.hidden_dim;
  const std::size_t c = config.channels;
  for (std::size_t k : kKernelSizes) {
    const std::string p = branch_prefix(k);
    params.add(p + ".weight", glorot_uniform({c, k, d}, k * d, k * c, rng));
    params.add(p + ".bias", Tensor({c}), false);
    params.add(p + ".bn.scale", Tensor({c}, 1.0), false);
    params.add(p + ".bn.shift", Tensor({c}), false);
  }
  const std::size_t d_r = config.enriched_dim();
  if (config.has_attention()) {
    add_attention_params(params, kAttention, config.n_heads, d_r, config.attention_dim(), d_r, rng);
  }
  if (config.has_dense()) {
    params.add("dense.weight", glorot_uniform({d_r, config.dense_dim}, d_r, config.dense_dim, rng));
    params.add("dense.bias", Tensor({config.dense_dim}), false);
    params.add("dense.norm.scale", Tensor({config.dense_dim}, 1.0), false);
    params.add("dense.norm.shift", Tensor({config.dense_dim}), false);
  }
  const std::size_t in = classifier_input_dim(config);
  const std::size_t out = config.output_dim();
  params.add("classifier.weight", glorot_uniform({in, out}, in, out, rng));
  params.add("classifier.bias", Tensor({out}), false);
  return params;
}

BufferStore init_buffers(const ModelConfig& config) {
  BufferStore buffers;
  for (std::size_t k : kKernelSizes) {
    buffers.add(branch_prefix(k) + ".bn.running_mean", Tensor({config.channels}));
    buffers.add(branch_prefix(k) + ".bn.running_var", Tensor({config.channels}, 1.0));
  }
  return buffers;
}

void validate_head_params(const ModelConfig& config, const ParamStore& params) {
  auto expect = [&](const std::string& name, const Shape& shape) {
    const Parameter* p = params.find(name);
    if (!p) {
      throw DimensionError("variant '" + std::string(to_string(config.variant)) + "' needs parameter '" + name + "'");
    }
    if (p->value.shape() != shape) {
      throw DimensionError("parameter '" + name + "' has shape " + shape_str(p->value.shape()) + ", variant '" +
                        std::string(to_string(config.variant)) + "' expects " + shape_str(shape));
    }
  };
  const std::size_t d = config.hidden_dim;
  const std::size_t c = config.channels;
  const std::size_t d_r = config.enriched_dim();
  for (std::size_t k : kKernelSizes) {
    const std::string p = branch_prefix(k);
    expect(p + ".weight", {c, k, d});
    expect(p + ".bias", {c});
    expect(p + ".bn.scale", {c});
    expect(p + ".bn.shift", {c});
  }
  if (config.has_attention()) {
    const std::size_t d_a = config.attention_dim();
    for (std::size_t h = 0; h < config.n_heads; ++h) {
      for (const char* which : {"w_q", "w_k", "w_v"}) expect(attention_param(kAttention, h, which), {d_r, d_a});
    }
    expect(attention_output_param(kAttention), {config.n_heads * d_a, d_r});
  }
  if (config.has_dense()) {
    expect("dense.weight", {d_r, config.dense_dim});
    expect("dense.bias", {config.dense_dim});
    expect("dense.norm.scale", {config.dense_dim});
    expect("dense.norm.shift", {config.dense_dim});
  }
  expect("classifier.weight", {classifier_input_dim(config), config.output_dim()});
  expect("classifier.bias", {config.output_dim()});
}

// ---------------------------------------------------------------------------

InceptionResult inception_forward(const ModelConfig& config, const ParamStore& params, BufferStore& buffers,
                                  const Tensor& H, Mode mode) {
  if (H.rank() != 3 || H.dim(2) != config.hidden_dim) {
    throw DimensionError("inception: expected B x L x " + std::to_string(config.hidden_dim) + ", got " +
                         shape_str(H.shape()));
  }
  InceptionResult r;
  std::vector<Tensor> activations;
  activations.reserve(kKernelSizes.size());
  for (std::size_t k : kKernelSizes) {
    const std::string p = branch_prefix(k);
    const ConvBranch branch = ConvBranch::with_kernel(k);
    BranchCache bc;
    bc.conv_out = conv1d_forward(branch, params.value(p + ".weight"), params.value(p + ".bias"), H);
    BatchNormResult bn = batchnorm_forward(params.value(p + ".bn.scale"), params.value(p + ".bn.shift"),
                                           buffers.at(p + ".bn.running_mean"), buffers.at(p + ".bn.running_var"),
                                           config.bn_momentum, config.bn_eps, mode, bc.conv_out);
    bc.bn = std::move(bn.cache);
    bc.bn_out = std::move(bn.y);
    activations.push_back(relu(bc.bn_out));
    r.cache.branches.push_back(std::move(bc));
  }
  r.features = concat_features(std::span<const Tensor>(activations));
  return r;
}

Tensor inception_backward(const ModelConfig& config, ParamStore& params, const Tensor& H,
                          const InceptionCache& cache, const Tensor& dC) {
  const std::vector<std::size_t> widths(kKernelSizes.size(), config.channels);
  std::vector<Tensor> d_branches = split_features(dC, widths);
  Tensor dH(H.shape());
  for (std::size_t i = 0; i < kKernelSizes.size(); ++i) {
    const std::size_t k = kKernelSizes[i];
    const std::string p = branch_prefix(k);
    const BranchCache& bc = cache.branches[i];
    Tensor d_bn = relu_backward(bc.bn_out, d_branches[i]);
    Parameter& scale = params.at(p + ".bn.scale");
    BatchNormGrads bg = batchnorm_backward(scale.value, bc.bn, d_bn);
    add_inplace(scale.grad, bg.d_scale);
    add_inplace(params.grad(p + ".bn.shift"), bg.d_shift);
    Parameter& weight = params.at(p + ".weight");
    Conv1dGrads cg = conv1d_backward(ConvBranch::with_kernel(k), weight.value, H, bg.dx);
    add_inplace(weight.grad, cg.d_weight);
    add_inplace(params.grad(p + ".bias"), cg.d_bias);
    add_inplace(dH, cg.d_input);
  }
  return dH;
}

Tensor enrich(const Tensor& H_dropped, const Tensor& C_map) { return concat_features({&H_dropped, &C_map}); }

Tensor adaptive_avg_pool(const Tensor& A) {
  if (A.rank() != 3) throw DimensionError("adaptive_avg_pool: expected B x L x f, got " + shape_str(A.shape()));
  const std::size_t batch = A.dim(0);
  const std::size_t len = A.dim(1);
  const std::size_t f = A.dim(2);
  Tensor P({batch, f});
  for (std::size_t b = 0; b < batch; ++b) {
    double* p = P.raw() + b * f;
    for (std::size_t i = 0; i < len; ++i) {
      const double* a = A.raw() + (b * len + i) * f;
      for (std::size_t j = 0; j < f; ++j) p[j] += a[j];
    }
    for (std::size_t j = 0; j < f; ++j) p[j] /= static_cast<double>(len);
  }
  return P;
}

Tensor adaptive_avg_pool_backward(std::size_t length, const Tensor& dP) {
  const std::size_t batch = dP.dim(0);
  const std::size_t f = dP.dim(1);
  Tensor dA({batch, length, f});
  const double inv = 1.0 / static_cast<double>(length);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < length; ++i) {
      for (std::size_t j = 0; j < f; ++j) dA[(b * length + i) * f + j] = dP[b * f + j] * inv;
    }
  }
  return dA;
}

std::vector<AttentionMap> attention_received(const Tensor& weights) {
  if (weights.rank() != 4 || weights.dim(2) != weights.dim(3)) {
    throw DimensionError("attention_received: expected B x h x L x L, got " + shape_str(weights.shape()));
  }
  const std::size_t batch = weights.dim(0);
  const std::size_t heads = weights.dim(1);
  const std::size_t len = weights.dim(2);
  std::vector<AttentionMap> maps(batch);
  const double norm = 1.0 / static_cast<double>(heads * len);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double>& received = maps[b].received;
    received.assign(len, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < len; ++i) {
        const double* row = weights.raw() + ((b * heads + h) * len + i) * len;
        double sum = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          if (row[j] < 0.0) throw DataError("attention_received: negative attention weight");
          sum += row[j];
          received[j] += row[j];
        }
        if (std::abs(sum - 1.0) > 1e-6) {
          throw DataError("attention_received: row (" + std::to_string(b) + ", " + std::to_string(h) + ", " +
                          std::to_string(i) + ") sums to " + std::to_string(sum));
        }
      }
    }
    for (double& v : received) v *= norm;
  }
  return maps;
}

std::vector<AttentionMap> cls_row_attention(const Tensor& weights) {
  if (weights.rank() != 4 || weights.dim(2) != weights.dim(3)) {
    throw DimensionError("cls_row_attention: expected B x h x L x L, got " + shape_str(weights.shape()));
  }
  const std::size_t batch = weights.dim(0);
  const std::size_t heads = weights.dim(1);
  const std::size_t len = weights.dim(2);
  std::vector<AttentionMap> maps(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    maps[b].received.assign(len, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      const double* row = weights.raw() + (b * heads + h) * len * len;
      for (std::size_t j = 0; j < len; ++j) maps[b].received[j] += row[j] / static_cast<double>(heads);
    }
  }
  return maps;
}

double attention_entropy(const AttentionMap& map) {
  double h = 0.0;
  for (double p : map.received) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// ---------------------------------------------------------------------------

HeadResult head_forward(const ModelConfig& config, const ParamStore& params, BufferStore& buffers, const Tensor& H,
                        Mode mode, Rng& rng) {
  validate_head_params(config, params);
  if (H.rank() != 3 || H.dim(2) != config.hidden_dim) {
    throw DimensionError("head: expected B x L x " + std::to_string(config.hidden_dim) + ", got " +
                         shape_str(H.shape()));
  }
  HeadResult r;
  HeadCache& cache = r.cache;
  cache.mode = mode;
  cache.length = H.dim(1);

  DropoutResult dropped = dropout(config.dropout_rate, mode, H, rng);
  cache.dropout_mask = std::move(dropped.mask);
  cache.h_dropped = std::move(dropped.y);

  InceptionResult inception = inception_forward(config, params, buffers, cache.h_dropped, mode);
  cache.inception = std::move(inception.cache);
  r.enriched = enrich(cache.h_dropped, inception.features);

  Tensor pooled_input;
  if (config.has_attention()) {
    MultiHeadResult mha = multi_head_attention(params, kAttention, config.n_heads, r.enriched);
    r.attention = std::move(mha.weights);
    cache.attention = std::move(mha.cache);
    pooled_input = std::move(mha.out);
  } else {
    pooled_input = r.enriched;
  }
  cache.pooled = adaptive_avg_pool(pooled_input);

  if (config.has_dense()) {
    cache.dense_pre = linear(params.value("dense.weight"), params.value("dense.bias"), cache.pooled);
    cache.dense_act = relu(*cache.dense_pre);
    LayerNormResult ln = layer_norm(params.value("dense.norm.scale"), params.value("dense.norm.shift"), *cache.dense_act);
    cache.dense_norm = std::move(ln.cache);
    cache.classifier_in = std::move(ln.y);
  } else {
    cache.classifier_in = cache.pooled;
  }
  r.logits = linear(params.value("classifier.weight"), params.value("classifier.bias"), cache.classifier_in);
  return r;
}

Tensor head_backward(const ModelConfig& config, ParamStore& params, const HeadCache& cache, const Tensor& dlogits) {
  Parameter& cw = params.at("classifier.weight");
  LinearGrads cls = linear_backward(cw.value, cache.classifier_in, dlogits);
  add_inplace(cw.grad, cls.dw);
  add_inplace(params.grad("classifier.bias"), cls.db);

  Tensor d_pooled;
  if (config.has_dense()) {
    Parameter& ns = params.at("dense.norm.scale");
    LayerNormGrads lg = layer_norm_backward(ns.value, *cache.dense_norm, cls.dx);
    add_inplace(ns.grad, lg.d_scale);
    add_inplace(params.grad("dense.norm.shift"), lg.d_shift);
    Tensor d_pre = relu_backward(*cache.dense_pre, lg.dx);
    Parameter& dw = params.at("dense.weight");
    LinearGrads dg = linear_backward(dw.value, cache.pooled, d_pre);
    add_inplace(dw.grad, dg.dw);
    add_inplace(params.grad("dense.bias"), dg.db);
    d_pooled = std::move(dg.dx);
  } else {
    d_pooled = std::move(cls.dx);
  }

  Tensor d_pool_in = adaptive_avg_pool_backward(cache.length, d_pooled);
  Tensor dR = config.has_attention()
                  ? multi_head_attention_backward(params, kAttention, config.n_heads, *cache.attention, d_pool_in)
                  : std::move(d_pool_in);

  const std::size_t widths[] = {config.hidden_dim, kKernelSizes.size() * config.channels};
  std::vector<Tensor> parts = split_features(dR, widths);
  Tensor d_dropped = std::move(parts[0]);
  add_inplace(d_dropped, inception_backward(config, params, cache.h_dropped, cache.inception, parts[1]));
  return dropout_backward(cache.dropout_mask, d_dropped);
}

// ---------------------------------------------------------------------------

ParamStore init_baseline_params(const ModelConfig& config, Rng& rng) {
  const std::size_t d = config.hidden_dim;
  const std::size_t out = config.output_dim();
  ParamStore params;
  params.add("classifier.weight", glorot_uniform({d, out}, d, out, rng));
  params.add("classifier.bias", Tensor({out}), false);
  return params;
}

BaselineResult baseline_cls_forward(const ModelConfig& config, const ParamStore& params, const Tensor& H, Mode mode,
                                    Rng& rng) {
  if (H.rank() != 3 || H.dim(2) != config.hidden_dim) {
    throw DimensionError("baseline head: expected B x L x " + std::to_string(config.hidden_dim) + ", got " +
                         shape_str(H.shape()));
  }
  const std::size_t batch = H.dim(0);
  const std::size_t len = H.dim(1);
  const std::size_t d = H.dim(2);
  BaselineResult r;
  r.cache.input_shape = H.shape();
  r.cache.first_token = Tensor({batch, d});
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(H.raw() + b * len * d, d, r.cache.first_token.raw() + b * d);
  DropoutResult dropped = dropout(config.dropout_rate, mode, r.cache.first_token, rng);
  r.cache.dropout_mask = std::move(dropped.mask);
  r.cache.dropped = std::move(dropped.y);
  r.logits = linear(params.value("classifier.weight"), params.value("classifier.bias"), r.cache.dropped);
  return r;
}

Tensor baseline_cls_backward(const ModelConfig&, ParamStore& params, const BaselineCache& cache,
                             const Tensor& dlogits) {
  Parameter& w = params.at("classifier.weight");
  LinearGrads g = linear_backward(w.value, cache.dropped, dlogits);
  add_inplace(w.grad, g.dw);
  add_inplace(params.grad("classifier.bias"), g.db);
  Tensor d_first = dropout_backward(cache.dropout_mask, g.dx);
  Tensor dH(cache.input_shape);
  const std::size_t len = cache.input_shape[1];
  const std::size_t d = cache.input_shape[2];
  for (std::size_t b = 0; b < cache.input_shape[0]; ++b) {
    std::copy_n(d_first.raw() + b * d, d, dH.raw() + b * len * d);
  }
  return dH;
}

}  // namespace inceptive
