#include "inceptive/model.hpp"

#include <algorithm>
#include <cmath>

#include "inceptive/error.hpp"

namespace inceptive {

void Dataset::validate() const {
  if (labels.empty()) throw InputError("dataset is empty");
  for (const Label& label : labels) {
    if (task == Task::multi_label) {
      const auto* bits = std::get_if<std::vector<std::uint8_t>>(&label);
      if (!bits || bits->size() != n_classes) throw LabelError("multi-label example needs " + std::to_string(n_classes) + " indicators");
      if (std::any_of(bits->begin(), bits->end(), [](std::uint8_t b) { return b > 1; })) {
        throw LabelError("label indicators must be 0 or 1");
      }
    } else {
      const auto* cls = std::get_if<std::uint32_t>(&label);
      if (!cls) throw LabelError("single-label task needs class indices");
      if (*cls >= n_classes) {
        throw LabelError("class index " + std::to_string(*cls) + " out of range for " + std::to_string(n_classes) +
                         " classes");
      }
    }
  }
  if (has_tokens()) {
    if (tokens.size() != labels.size()) throw InputError("dataset has " + std::to_string(tokens.size()) + " token lists for " + std::to_string(labels.size()) + " labels");
    const std::size_t len = tokens.front().size();
    for (const auto& ids : tokens) {
      if (ids.size() != len || len == 0) throw InputError("token sequences must share one non-zero length");
    }
  }
  if (hidden) {
    if (hidden->rank() != 3 || hidden->dim(0) != labels.size()) {
      throw InputError("hidden states " + shape_str(hidden->shape()) + " do not match " +
                       std::to_string(labels.size()) + " labels");
    }
  }
  if (!has_tokens() && !hidden) throw InputError("dataset carries neither tokens nor hidden states");
}

std::string_view to_string(HeadKind kind) { return kind == HeadKind::inceptive ? "inceptive" : "baseline"; }

HeadKind parse_head_kind(std::string_view text) {
  if (text == "inceptive") return HeadKind::inceptive;
  if (text == "baseline") return HeadKind::baseline;
  throw ConfigError("unknown model '" + std::string(text) + "' (expected inceptive or baseline)");
}

namespace {

void check_config(const ClassifierConfig& config) {
  if (config.head == HeadKind::inceptive) {
    config.model.validate();
  } else if (config.model.hidden_dim == 0 || config.model.output_dim() == 0) {
    throw ConfigError("baseline head needs positive d and class count");
  }
  if (config.encoder) {
    config.encoder->validate();
    if (config.encoder->hidden_dim != config.model.hidden_dim) {
      throw ConfigError("d: encoder hidden size " + std::to_string(config.encoder->hidden_dim) +
                        " differs from head input " + std::to_string(config.model.hidden_dim));
    }
  }
}

}  // namespace

Classifier::Classifier(ClassifierConfig config, std::uint64_t seed) : config_(std::move(config)) {
  check_config(config_);
  Rng rng(derive_seed(seed, 0x1A17));
  if (config_.encoder) params_ = init_encoder_params(*config_.encoder, rng);
  if (config_.head == HeadKind::inceptive) {
    params_.merge(init_params(config_.model, rng));
    buffers_ = init_buffers(config_.model);
  } else {
    params_.merge(init_baseline_params(config_.model, rng));
  }
}

Classifier::Classifier(ClassifierConfig config, ParamStore params, BufferStore buffers)
    : config_(std::move(config)), params_(std::move(params)), buffers_(std::move(buffers)) {
  check_config(config_);
  if (config_.head == HeadKind::inceptive) {
    validate_head_params(config_.model, params_);
    for (std::size_t k : kKernelSizes) {
      for (const char* stat : {".bn.running_mean", ".bn.running_var"}) {
        const Tensor* t = buffers_.find(branch_prefix(k) + stat);
        if (!t || t->shape() != Shape{config_.model.channels}) {
          throw DimensionError("checkpoint lacks buffer '" + branch_prefix(k) + stat + "' of the configured shape");
        }
      }
    }
  } else {
    const Parameter* w = params_.find("classifier.weight");
    if (!w || w->value.shape() != Shape{config_.model.hidden_dim, config_.model.output_dim()}) {
      throw DimensionError("checkpoint classifier does not match the baseline configuration");
    }
  }
  if (config_.encoder) {
    const Parameter* tok = params_.find("encoder.token_embedding");
    if (!tok || tok->value.shape() != Shape{config_.encoder->vocab_size, config_.encoder->hidden_dim}) {
      throw DimensionError("checkpoint token embedding does not match the encoder configuration");
    }
  }
}

void Classifier::check_compatible(const Dataset& data) const {
  if (data.task != config_.model.task || data.n_classes != config_.model.n_classes) {
    throw ConfigError("dataset task/classes (" + std::string(to_string(data.task)) + ", " +
                      std::to_string(data.n_classes) + ") differ from the model's (" +
                      std::string(to_string(config_.model.task)) + ", " + std::to_string(config_.model.n_classes) + ")");
  }
  if (config_.encoder && !data.has_tokens()) throw ConfigError("model has an encoder but the dataset has no tokens");
  if (!config_.encoder && !data.hidden) throw ConfigError("model expects hidden states but the dataset has none");
}

Tensor Classifier::hidden_states(const Dataset& data, std::span<const std::size_t> indices) {
  check_compatible(data);
  if (indices.empty()) throw InputError("empty batch");
  if (config_.encoder) {
    TokenBatch tb;
    tb.batch = indices.size();
    tb.length = data.tokens[indices.front()].size();
    tb.ids.reserve(tb.batch * tb.length);
    for (std::size_t i : indices) tb.ids.insert(tb.ids.end(), data.tokens[i].begin(), data.tokens[i].end());
    Tensor X = embed(*config_.encoder, params_, tb);
    encoder_cache_ = encode(*config_.encoder, params_, X);
    tokens_ = std::move(tb);
    return encoder_cache_->hidden;
  }
  const Tensor& all = *data.hidden;
  const std::size_t len = all.dim(1);
  const std::size_t d = all.dim(2);
  Tensor H({indices.size(), len, d});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    std::copy_n(all.raw() + indices[b] * len * d, len * d, H.raw() + b * len * d);
  }
  tokens_.reset();
  encoder_cache_.reset();
  return H;
}

ClassifierOutput Classifier::forward(const Dataset& data, std::span<const std::size_t> indices, Mode mode, Rng& rng) {
  ClassifierOutput out;
  Tensor H = hidden_states(data, indices);
  if (encoder_cache_) out.encoder_attention = encoder_cache_->last_attention;
  if (config_.head == HeadKind::inceptive) {
    HeadResult r = head_forward(config_.model, params_, buffers_, H, mode, rng);
    out.logits = std::move(r.logits);
    out.head_attention = std::move(r.attention);
    head_cache_ = std::move(r.cache);
    baseline_cache_.reset();
  } else {
    BaselineResult r = baseline_cls_forward(config_.model, params_, H, mode, rng);
    out.logits = std::move(r.logits);
    baseline_cache_ = std::move(r.cache);
    head_cache_.reset();
  }
  return out;
}

void Classifier::backward(const Tensor& dlogits) {
  Tensor dH;
  if (head_cache_) {
    dH = head_backward(config_.model, params_, *head_cache_, dlogits);
  } else if (baseline_cache_) {
    dH = baseline_cls_backward(config_.model, params_, *baseline_cache_, dlogits);
  } else {
    throw ConfigError("backward() called before forward()");
  }
  if (config_.encoder && encoder_cache_ && tokens_) {
    Tensor dX = encode_backward(*config_.encoder, params_, *encoder_cache_, dH);
    embed_backward(*config_.encoder, params_, *tokens_, dX);
  }
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor probabilities(Task task, const Tensor& logits) {
  switch (task) {
    case Task::multi_class:
      return softmax_rows(logits);
    case Task::binary: {
      Tensor p({logits.rows(), 2});
      for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double s = sigmoid(logits[i]);
        p[2 * i] = 1.0 - s;
        p[2 * i + 1] = s;
      }
      return p;
    }
    case Task::multi_label: {
      Tensor p(logits.shape());
      for (std::size_t i = 0; i < logits.size(); ++i) p[i] = sigmoid(logits[i]);
      return p;
    }
  }
  return logits;
}

}  // namespace inceptive
