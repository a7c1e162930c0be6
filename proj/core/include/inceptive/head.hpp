#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "inceptive/attention.hpp"
#include "inceptive/layers.hpp"
#include "inceptive/param_store.hpp"
#include "inceptive/rng.hpp"
#include "inceptive/tensor.hpp"

namespace inceptive {

enum class Task { multi_class, binary, multi_label };
enum class Variant { full, no_attn, no_dense };

std::string_view to_string(Task task);
std::string_view to_string(Variant variant);
Task parse_task(std::string_view text);
Variant parse_variant(std::string_view text);

inline constexpr std::array<std::size_t, 4> kKernelSizes{2, 3, 5, 7};

struct ModelConfig {
  std::size_t hidden_dim = 768;  // d
  std::size_t channels = 32;     // c, per convolution branch
  std::size_t n_heads = 8;       // h
  std::size_t head_dim = 0;      // d_A; 0 selects enriched_dim() / n_heads
  std::size_t dense_dim = 512;   // d_D
  std::size_t n_classes = 2;     // C
  Task task = Task::multi_class;
  double dropout_rate = 0.1;
  Variant variant = Variant::full;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  // d_R = d + 4c
  std::size_t enriched_dim() const noexcept { return hidden_dim + kKernelSizes.size() * channels; }
  std::size_t attention_dim() const noexcept { return head_dim ? head_dim : enriched_dim() / n_heads; }
  // Number of logits: one per class, except a single logit for binary tasks.
  std::size_t output_dim() const noexcept { return task == Task::binary ? 1 : n_classes; }
  bool has_attention() const noexcept { return variant != Variant::no_attn; }
  bool has_dense() const noexcept { return variant != Variant::no_dense; }

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Parameter/buffer names for branch k of the inception module.
std::string branch_prefix(std::size_t kernel_size);

/// Glorot weights; zero biases and norm shifts; unit norm scales.
ParamStore init_params(const ModelConfig& config, Rng& rng);
/// Batch-norm running statistics (mean 0, variance 1) for every branch.
BufferStore init_buffers(const ModelConfig& config);

/// Throws DimensionError if `params` lacks an entry the variant needs or holds
/// one with the wrong shape.
void validate_head_params(const ModelConfig& config, const ParamStore& params);

// ---------------------------------------------------------------------------

struct BranchCache {
  Tensor conv_out;
  BatchNormCache bn;
  Tensor bn_out;
};

struct InceptionCache {
  std::vector<BranchCache> branches;
};

struct InceptionResult {
  Tensor features;  // C_map: [B x L x 4c], branches in kernel order 2, 3, 5, 7
  InceptionCache cache;
};

InceptionResult inception_forward(const ModelConfig& config, const ParamStore& params, BufferStore& buffers,
                                  const Tensor& H, Mode mode);
Tensor inception_backward(const ModelConfig& config, ParamStore& params, const Tensor& H,
                          const InceptionCache& cache, const Tensor& dC);

/// R = [H_dropped | C_map] along the feature axis.
Tensor enrich(const Tensor& H_dropped, const Tensor& C_map);

/// Per-channel mean over the sequence axis: [B x L x f] -> [B x f].
Tensor adaptive_avg_pool(const Tensor& A);
Tensor adaptive_avg_pool_backward(std::size_t length, const Tensor& dP);

/// Attention mass each key position receives, averaged over heads and query
/// positions. A mean of probability rows, so it sums to one.
struct AttentionMap {
  std::vector<double> received;
};

/// `weights`: [B x h x L x L]. Throws DataError if a row is not normalized
/// to within 1e-6.
std::vector<AttentionMap> attention_received(const Tensor& weights);

/// Attention row of query position 0 averaged over heads, one map per example.
std::vector<AttentionMap> cls_row_attention(const Tensor& weights);

/// Shannon entropy (natural log) of a received-attention distribution.
double attention_entropy(const AttentionMap& map);

// ---------------------------------------------------------------------------

struct HeadCache {
  Mode mode = Mode::eval;
  Tensor dropout_mask;
  Tensor h_dropped;
  InceptionCache inception;
  std::optional<MultiHeadCache> attention;
  std::size_t length = 0;
  Tensor pooled;
  std::optional<Tensor> dense_pre;  // linear output before ReLU
  std::optional<Tensor> dense_act;  // after ReLU
  std::optional<LayerNormCache> dense_norm;
  Tensor classifier_in;
};

struct HeadResult {
  Tensor logits;                    // [B x output_dim]
  Tensor enriched;                  // R
  std::optional<Tensor> attention;  // [B x h x L x L] when the variant has attention
  HeadCache cache;
};

/// dropout(H) -> inception -> enrich -> [attention] -> pool -> [dense] -> classifier.
HeadResult head_forward(const ModelConfig& config, const ParamStore& params, BufferStore& buffers, const Tensor& H,
                        Mode mode, Rng& rng);

/// Accumulates parameter gradients and returns dL/dH.
Tensor head_backward(const ModelConfig& config, ParamStore& params, const HeadCache& cache, const Tensor& dlogits);

// ---------------------------------------------------------------------------
// First-token comparator: logits = dropout(H[:, 0, :]) W + b.

ParamStore init_baseline_params(const ModelConfig& config, Rng& rng);

struct BaselineCache {
  Shape input_shape;
  Tensor first_token;
  Tensor dropout_mask;
  Tensor dropped;
};

struct BaselineResult {
  Tensor logits;
  BaselineCache cache;
};

BaselineResult baseline_cls_forward(const ModelConfig& config, const ParamStore& params, const Tensor& H, Mode mode,
                                    Rng& rng);
Tensor baseline_cls_backward(const ModelConfig& config, ParamStore& params, const BaselineCache& cache,
                             const Tensor& dlogits);

}  // namespace inceptive
