#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "inceptive/encoder.hpp"
#include "inceptive/head.hpp"
#include "inceptive/layers.hpp"
#include "inceptive/param_store.hpp"
#include "inceptive/rng.hpp"
#include "inceptive/tensor.hpp"

namespace inceptive {

/// Labeled examples, either as token ids (fed through the toy encoder) or as
/// precomputed hidden states (frozen).
struct Dataset {
  Task task = Task::multi_class;
  std::size_t n_classes = 0;
  std::vector<Label> labels;
  std::vector<std::vector<std::uint32_t>> tokens;  // token path: one id list per example
  std::optional<Tensor> hidden;                    // embedding path: [N x L x d]

  std::size_t size() const noexcept { return labels.size(); }
  bool has_tokens() const noexcept { return !tokens.empty(); }

  // Throws LabelError / InputError on inconsistent contents.
  void validate() const;
};

enum class HeadKind { inceptive, baseline };

std::string_view to_string(HeadKind kind);
HeadKind parse_head_kind(std::string_view text);

struct ClassifierConfig {
  HeadKind head = HeadKind::inceptive;
  ModelConfig model;
  // Present when the classifier owns a trainable toy encoder; absent when it
  // consumes precomputed hidden states.
  std::optional<EncoderConfig> encoder;
};

struct ClassifierOutput {
  Tensor logits;
  std::optional<Tensor> head_attention;     // [B x h x L x L], inceptive variants with attention
  std::optional<Tensor> encoder_attention;  // [B x h x L x L], last encoder block
};

/// Encoder (optional) + inceptive or baseline head, with one cached forward
/// pass for backward().
class Classifier {
 public:
  Classifier(ClassifierConfig config, std::uint64_t seed);
  Classifier(ClassifierConfig config, ParamStore params, BufferStore buffers);

  const ClassifierConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  BufferStore& buffers() noexcept { return buffers_; }
  const BufferStore& buffers() const noexcept { return buffers_; }

  // Hidden states for the selected examples (embedding lookup + encoder, or a
  // gather from the frozen tensor).
  Tensor hidden_states(const Dataset& data, std::span<const std::size_t> indices);

  ClassifierOutput forward(const Dataset& data, std::span<const std::size_t> indices, Mode mode, Rng& rng);

  // Backpropagates through the most recent forward() and accumulates into
  // params().grad. Gradients are not zeroed here.
  void backward(const Tensor& dlogits);

 private:
  void check_compatible(const Dataset& data) const;

  ClassifierConfig config_;
  ParamStore params_;
  BufferStore buffers_;

  std::optional<TokenBatch> tokens_;
  std::optional<EncoderResult> encoder_cache_;
  std::optional<HeadCache> head_cache_;
  std::optional<BaselineCache> baseline_cache_;
};

/// Class probabilities for the task: softmax rows (multi-class), [1-p, p]
/// per example (binary), element-wise sigmoid (multi-label).
Tensor probabilities(Task task, const Tensor& logits);

}  // namespace inceptive
