#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "inceptive/attention.hpp"
#include "inceptive/layers.hpp"
#include "inceptive/param_store.hpp"
#include "inceptive/rng.hpp"
#include "inceptive/tensor.hpp"

namespace inceptive {

// A class index (multi-class / binary) or a 0/1 indicator per label (multi-label).
using Label = std::variant<std::uint32_t, std::vector<std::uint8_t>>;

struct TokenSequence {
  std::vector<std::uint32_t> token_ids;
  Label label;
};

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden_dim = 16;  // d
  std::size_t n_layers = 1;
  std::size_t n_heads = 2;
  std::size_t ffn_size = 32;
  std::size_t max_len = 128;

  void validate() const;
};

// Flattened [B x L] token ids.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::uint32_t> ids;

  static TokenBatch from(std::span<const TokenSequence> sequences);
};

ParamStore init_encoder_params(const EncoderConfig& config, Rng& rng);

/// Token embedding plus learned position embedding: [B x L x d].
/// Throws VocabularyError for ids >= vocab_size.
Tensor embed(const EncoderConfig& config, const ParamStore& params, const TokenBatch& tokens);
Tensor embed(const EncoderConfig& config, const ParamStore& params, std::span<const TokenSequence> batch);
void embed_backward(const EncoderConfig& config, ParamStore& params, const TokenBatch& tokens, const Tensor& dX);

struct EncoderBlockCache {
  Tensor input;
  LayerNormCache norm1;
  MultiHeadCache attention;
  Tensor mid;
  LayerNormCache norm2;
  Tensor norm2_out;
  Tensor ffn_pre;
  Tensor ffn_act;
};

struct EncoderResult {
  Tensor hidden;                         // H: [B x L x d]
  std::vector<EncoderBlockCache> blocks;
  std::optional<Tensor> last_attention;  // [B x h x L x L] of the final block
};

/// Stack of pre-norm blocks:
///   x = x + MHA(LN1(x));  x = x + W2 relu(W1 LN2(x) + b1) + b2
/// With zero layers H equals the input.
EncoderResult encode(const EncoderConfig& config, const ParamStore& params, const Tensor& X);

/// Accumulates encoder gradients and returns dL/dX.
Tensor encode_backward(const EncoderConfig& config, ParamStore& params, const EncoderResult& forward,
                       const Tensor& dH);

// ---------------------------------------------------------------------------
// IEMB embedding files:
//   "IEMB" | u32 version (=1) | u32 B | u32 L | u32 d | u8 label_kind | u32 C |
//   B labels (u32 class index, or C x u8 indicators) | B*L*d f32 row-major
// All little-endian.

enum class LabelKind : std::uint8_t { class_index = 0, multi_label = 1 };

struct EmbeddingSet {
  Tensor hidden;  // [B x L x d], treated as frozen
  LabelKind label_kind = LabelKind::class_index;
  std::uint32_t n_labels = 0;
  std::vector<Label> labels;
};

void save_embeddings(const std::filesystem::path& path, const EmbeddingSet& set);
EmbeddingSet load_embeddings(const std::filesystem::path& path);

}  // namespace inceptive
